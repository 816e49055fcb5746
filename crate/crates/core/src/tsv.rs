//! Minimal tab-separated reading and writing. Fields never contain tabs or
//! newlines; writers replace them with spaces.

use std::io::{self, BufRead, Write};

pub(crate) fn clean(field: &str) -> String {
    field.replace(['\t', '\n', '\r'], " ")
}

pub(crate) fn write_row<W: Write, S: AsRef<str>>(out: &mut W, fields: &[S]) -> io::Result<()> {
    let mut first = true;
    for f in fields {
        if !first {
            out.write_all(b"\t")?;
        }
        first = false;
        out.write_all(clean(f.as_ref()).as_bytes())?;
    }
    out.write_all(b"\n")
}

/// A parsed TSV table: header plus data rows. Lines starting with `#` and
/// blank lines are skipped.
#[derive(Debug, Clone)]
pub(crate) struct Table {
    pub header: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn read<R: BufRead>(input: R) -> io::Result<Option<Table>> {
        let mut header = None;
        let mut rows = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
            if header.is_none() {
                header = Some(fields.into_iter().map(|f| f.trim().to_lowercase()).collect());
            } else {
                rows.push((i + 1, fields));
            }
        }
        Ok(header.map(|header| Table { header, rows }))
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}
