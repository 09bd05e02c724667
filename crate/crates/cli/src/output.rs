//! CSV formatting and artifact bundling.

use std::fmt::Write as _;

/// A file produced by a command, written by the single writer in `run`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    pub fn json<T: serde::Serialize>(name: &str, value: &T) -> Self {
        let mut contents = serde_json::to_string_pretty(value).expect("artifact serializes");
        contents.push('\n');
        Self {
            name: name.into(),
            contents,
        }
    }
}

/// 17 significant digits, `.` decimal separator.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Row-at-a-time CSV builder with `\n` line endings.
pub struct Csv {
    name: String,
    buf: String,
    width: usize,
}

impl Csv {
    pub fn new(name: &str, header: &[&str]) -> Self {
        let mut c = Self {
            name: name.into(),
            buf: String::new(),
            width: header.len(),
        };
        c.raw_row(header.iter().map(|h| h.to_string()));
        c
    }

    /// Header built at run time (e.g. `draw_0..draw_{n-1}`).
    pub fn with_header(name: &str, header: Vec<String>) -> Self {
        let mut c = Self {
            name: name.into(),
            buf: String::new(),
            width: header.len(),
        };
        c.raw_row(header);
        c
    }

    fn raw_row(&mut self, fields: impl IntoIterator<Item = String>) {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            let _ = write!(self.buf, "{}", quote(&f));
        }
        self.buf.push('\n');
    }

    pub fn row(&mut self, fields: Vec<String>) {
        debug_assert_eq!(fields.len(), self.width, "row width in {}", self.name);
        self.raw_row(fields);
    }

    pub fn finish(self) -> Artifact {
        Artifact {
            name: self.name,
            contents: self.buf,
        }
    }
}
