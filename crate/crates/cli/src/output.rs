//! CSV and JSON writers. Floats use the shortest round-trip representation
//! and lines end in `\n`, so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

pub struct Csv {
    header: &'static str,
    columns: usize,
    body: String,
}

impl Csv {
    pub fn new(header: &'static str) -> Self {
        Self {
            header,
            columns: header.split(',').count(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, values: &[f64]) -> anyhow::Result<()> {
        assert_eq!(values.len(), self.columns, "row width");
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            bail!("refusing to write non-finite value {v} to CSV");
        }
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            write!(self.body, "{v}").expect("write to String");
        }
        self.body.push('\n');
        Ok(())
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header, self.body)
    }

    pub fn write(&self, dir: &Path, name: &str) -> anyhow::Result<PathBuf> {
        write_file(dir, name, &self.render())
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, &text)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_round_trip() {
        let mut c = Csv::new("a,b");
        c.row(&[0.1, 1e-7]).unwrap();
        c.row(&[2.0, 0.30000000000000004]).unwrap();
        let text = c.render();
        assert_eq!(text, "a,b\n0.1,0.0000001\n2,0.30000000000000004\n");
        for line in text.lines().skip(1) {
            for v in line.split(',') {
                let x: f64 = v.parse().unwrap();
                assert_eq!(x.to_string(), v);
            }
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Csv::new("a").row(&[f64::NAN]).is_err());
    }
}
