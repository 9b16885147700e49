//! Plain-text artifact formatting shared by every exporter.

use std::fmt::Write;

/// Formats a float with 17 significant digits so that the text round-trips
/// to the identical `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV document with the given header and numeric rows.
pub fn csv_table<'a, I>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Ordered `key=value` report.
#[derive(Debug, Default, Clone)]
pub struct KeyValueReport {
    entries: Vec<(String, String)>,
}

impl KeyValueReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.entries.push((key.to_string(), value.into()));
        self
    }

    pub fn number(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, fmt_f64(value))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_precision() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02214076e23,
            std::f64::consts::PI,
        ] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_layout() {
        let rows = [[1.0, 2.0], [3.0, 4.0]];
        let text = csv_table("a,b", rows.iter().map(|r| r.as_slice()));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "a,b");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "3.0000000000000000e0,4.0000000000000000e0");
    }

    #[test]
    fn report_lookup() {
        let mut r = KeyValueReport::new();
        r.text("regime", "Triple").number("x", 0.5);
        assert_eq!(r.get("regime"), Some("Triple"));
        assert!(r.render().starts_with("regime=Triple\n"));
    }
}
