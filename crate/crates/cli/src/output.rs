//! Output files. Each one starts with the resolved config and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    meta: Meta<'a>,
    result: &'a T,
}

pub struct Outputs<'a> {
    pub cfg: &'a RunConfig,
    pub command: &'a str,
    pub written: Vec<PathBuf>,
}

impl<'a> Outputs<'a> {
    pub fn new(cfg: &'a RunConfig, command: &'a str) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&cfg.io.out_dir)
            .with_context(|| format!("creating output directory {}", cfg.io.out_dir.display()))?;
        Ok(Self {
            cfg,
            command,
            written: Vec::new(),
        })
    }

    fn meta(&self) -> Meta<'_> {
        Meta {
            tool: "gbergomi",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed: self.cfg.mc.seed,
            config: self.cfg,
        }
    }

    pub fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> anyhow::Result<()> {
        let path = self.cfg.io.path(stem, "json");
        let doc = Document {
            meta: self.meta(),
            result: value,
        };
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    /// CSV with `#`-prefixed header lines holding the config.
    pub fn csv<R: Serialize>(&mut self, stem: &str, rows: &[R]) -> anyhow::Result<()> {
        let path = self.cfg.io.path(stem, "csv");
        let mut w = create(&path)?;
        writeln!(w, "# gbergomi {} {}", env!("CARGO_PKG_VERSION"), self.command)?;
        writeln!(w, "# seed = {}", self.cfg.mc.seed)?;
        for line in self.cfg.to_toml().lines() {
            writeln!(w, "# {line}")?;
        }
        {
            let mut out = csv::Writer::from_writer(&mut w);
            for r in rows {
                out.serialize(r)?;
            }
            out.flush()?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    pub fn report(&self) {
        for p in &self.written {
            println!("wrote {}", p.display());
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}
