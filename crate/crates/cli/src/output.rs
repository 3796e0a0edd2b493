use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;

/// Writes artifacts into the output directory. JSON artifacts carry the
/// effective config under `"config"`; CSV runs get it in `config.json`.
pub struct Output {
    dir: PathBuf,
    config: Value,
}

impl Output {
    pub fn new(cfg: &RunConfig) -> anyhow::Result<Self> {
        fs::create_dir_all(&cfg.out)
            .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
        Ok(Self {
            dir: cfg.out.clone(),
            config: serde_json::to_value(cfg)?,
        })
    }

    fn create(&self, name: &str) -> anyhow::Result<(PathBuf, BufWriter<File>)> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((path, BufWriter::new(file)))
    }

    fn done(path: PathBuf, mut w: BufWriter<File>) -> anyhow::Result<()> {
        w.flush()
            .with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
        Ok(())
    }

    /// `fields` must be a JSON object; keys come out sorted.
    pub fn json(&self, name: &str, fields: Value) -> anyhow::Result<()> {
        let mut doc = match fields {
            Value::Object(map) => map,
            other => {
                let mut map = Map::new();
                map.insert("data".into(), other);
                map
            }
        };
        doc.insert("config".into(), self.config.clone());
        let (path, mut w) = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &Value::Object(doc))?;
        writeln!(w)?;
        Self::done(path, w)
    }

    pub fn config_sidecar(&self) -> anyhow::Result<()> {
        self.json("config.json", json!({}))
    }

    pub fn csv(
        &self,
        name: &str,
        write: impl FnOnce(&mut csv::Writer<&mut BufWriter<File>>) -> csv::Result<()>,
    ) -> anyhow::Result<()> {
        let (path, mut w) = self.create(name)?;
        {
            let mut out = csv::Writer::from_writer(&mut w);
            write(&mut out).with_context(|| format!("writing {}", path.display()))?;
            out.flush()?;
        }
        Self::done(path, w)
    }

    /// For the core crate's own `write_csv` methods.
    pub fn raw(
        &self,
        name: &str,
        write: impl FnOnce(&mut BufWriter<File>) -> portopt::Result<()>,
    ) -> anyhow::Result<()> {
        let (path, mut w) = self.create(name)?;
        write(&mut w).with_context(|| format!("writing {}", path.display()))?;
        Self::done(path, w)
    }

    /// Square matrix with a `code` column and one column per code.
    pub fn matrix_csv(&self, name: &str, codes: &[String], m: &DMatrix<f64>) -> anyhow::Result<()> {
        self.csv(name, |out| {
            out.write_field("code")?;
            out.write_record(codes)?;
            for (code, row) in codes.iter().zip(m.row_iter()) {
                out.write_field(code)?;
                out.write_record(row.iter().map(|v| v.to_string()))?;
            }
            Ok(())
        })
    }
}
