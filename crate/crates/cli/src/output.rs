//! Artifact writers: CSV with '#' comment headers and 12-significant-digit
//! scientific values, plus ASCII (P2) PGM heatmaps.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

pub fn sci(x: f64) -> String {
    format!("{x:.11e}")
}

fn open(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating `{}`", path.display()))?;
    Ok(std::io::BufWriter::new(file))
}

/// CSV: `# `-prefixed header lines, a `# columns:` line, then data rows.
pub fn write_csv(
    path: &Path,
    header: &[String],
    columns: &[String],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut w = open(path)?;
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# columns: {}", columns.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// ASCII PGM (P2): rows = states, columns = delays, linear gray mapping
/// with 0 → 0 and the matrix maximum → 255. `matrix[delay][state]` as
/// produced by the carpet scan; transposed here so delay runs left→right.
pub fn write_pgm(path: &Path, header: &[String], matrix: &[Vec<f64>]) -> Result<()> {
    let cols = matrix.len();
    let rows = matrix.first().map_or(0, Vec::len);
    let max = matrix
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, &p| m.max(p));
    let mut w = open(path)?;
    writeln!(w, "P2")?;
    for line in header {
        // PGM caps every line at 70 characters, comments included
        let chars: Vec<char> = line.chars().collect();
        for chunk in chars.chunks(68) {
            writeln!(w, "# {}", chunk.iter().collect::<String>())?;
        }
    }
    writeln!(w, "{cols} {rows}")?;
    writeln!(w, "255")?;
    for state in 0..rows {
        // keep lines within the 70-character PGM limit
        let mut line = String::new();
        for delay in 0..cols {
            let p = matrix[delay][state];
            let gray = if max > 0.0 {
                (255.0 * p / max).round() as u32
            } else {
                0
            };
            let token = gray.to_string();
            if line.is_empty() {
                line = token;
            } else if line.len() + 1 + token.len() > 70 {
                writeln!(w, "{line}")?;
                line = token;
            } else {
                line.push(' ');
                line.push_str(&token);
            }
        }
        if !line.is_empty() {
            writeln!(w, "{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}
