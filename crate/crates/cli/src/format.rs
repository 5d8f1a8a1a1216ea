use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// 17 significant digits in scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub type CsvOut = csv::Writer<Box<dyn Write>>;

/// CSV writer with `,` delimiter and LF terminator, to `path` or stdout.
pub fn csv_writer(path: Option<&Path>) -> io::Result<CsvOut> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    Ok(csv::WriterBuilder::new()
        .delimiter(b',')
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink))
}

/// Column names `prefix1..prefixN`, or just `prefix` when `n == 1`.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        return vec![prefix.to_string()];
    }
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            let s = num(x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn column_names() {
        assert_eq!(indexed("u", 1), vec!["u"]);
        assert_eq!(indexed("x", 3), vec!["x1", "x2", "x3"]);
        assert!(indexed("y", 0).is_empty());
    }
}
