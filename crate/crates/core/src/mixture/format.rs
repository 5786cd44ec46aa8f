//! Plain-text world files.
//!
//! ```text
//! # comments and blank lines are ignored
//! dim = 2
//! # component = weight mean_1 .. mean_d scale label
//! component = 0.25 2 2 0.5 0
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Component, MixtureWorld};
use crate::{Error, Real, Result};

impl<T: Real> MixtureWorld<T> {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# Gaussian mixture world\n");
        let _ = writeln!(out, "dim = {}", self.dim);
        out.push_str("# component = weight mean_1 .. mean_d scale label\n");
        for c in &self.components {
            let _ = write!(out, "component = {}", c.weight);
            for m in &c.mean {
                let _ = write!(out, " {m}");
            }
            let _ = writeln!(out, " {} {}", c.scale, c.label);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            })?;
            match key.trim() {
                "dim" => {
                    let d = value.trim().parse::<usize>().map_err(|e| Error::Parse {
                        line,
                        message: format!("bad dim: {e}"),
                    })?;
                    dim = Some(d);
                }
                "component" => rows.push((line, value.trim().to_string())),
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        let dim = dim.ok_or(Error::Parse {
            line: 0,
            message: "missing `dim`".into(),
        })?;
        let mut components = Vec::with_capacity(rows.len());
        for (line, row) in rows {
            let fields: Vec<&str> = row.split_whitespace().collect();
            if fields.len() != dim + 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("component needs {} fields, got {}", dim + 3, fields.len()),
                });
            }
            let num = |s: &str| -> Result<T> {
                s.parse::<f64>().map(T::lit).map_err(|e| Error::Parse {
                    line,
                    message: format!("bad number `{s}`: {e}"),
                })
            };
            let weight = num(fields[0])?;
            let mean = fields[1..=dim].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let scale = num(fields[dim + 1])?;
            let label = fields[dim + 2].parse::<usize>().map_err(|e| Error::Parse {
                line,
                message: format!("bad label: {e}"),
            })?;
            components.push(Component {
                weight,
                mean,
                scale,
                label,
            });
        }
        MixtureWorld::new(dim, components)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("cannot read world file {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
