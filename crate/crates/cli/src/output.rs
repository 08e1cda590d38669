//! CSV emission with `# key = value` provenance lines ahead of the header.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use ehcell_core::config::describe;
use ehcell_core::NetworkConfig;

pub const VERSION: &str = env!("EHCELL_VERSION");

pub struct Table {
    pub provenance: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(command: &str, cfg: &NetworkConfig, seed: u64) -> Self {
        let mut provenance = vec![("ehcell".to_string(), VERSION.to_string()), ("command".into(), command.into())];
        provenance.extend(describe(cfg));
        provenance.push(("seed".into(), seed.to_string()));
        Self { provenance, header: Vec::new(), rows: Vec::new() }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.provenance.push((key.to_string(), value.to_string()));
    }

    pub fn columns(&mut self, names: &[&str]) {
        self.header = names.iter().map(|s| s.to_string()).collect();
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to(&self, out: Option<&Path>) -> io::Result<()> {
        let sink: Box<dyn Write> = match out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(io::stdout().lock()),
        };
        let mut sink = sink;
        for (k, v) in &self.provenance {
            writeln!(sink, "# {k} = {v}")?;
        }
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()
    }
}

pub fn num(x: f64) -> String {
    x.to_string()
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
