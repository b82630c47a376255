use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_f64(field: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column '{column}': '{field}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("column '{column}': non-finite value '{field}'") });
    }
    Ok(v)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &std::path::Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = std::fs::File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let read = std::io::Read::read(&mut file, &mut buf)?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-310, 6.02214076e23, 0.0] {
            assert_eq!(parse_f64(&fmt_f64(v), 1, "x").unwrap(), v);
        }
        assert!(parse_f64("nan", 3, "x").is_err());
        assert!(matches!(parse_f64("abc", 3, "x"), Err(Error::Parse { line: 3, .. })));
    }
}
