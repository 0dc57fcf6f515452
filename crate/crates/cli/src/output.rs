//! Artifact files written into the output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use blockspin_core::green::OperatorKernel;
use serde::Serialize;

pub struct Artifacts {
    dir: PathBuf,
    pub files: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `(row, col, value)` triples of a kernel's coordinate matrix.
    pub fn kernel_csv(&mut self, name: &str, k: &OperatorKernel) -> Result<()> {
        #[derive(Serialize)]
        struct Entry {
            row: usize,
            col: usize,
            value: f64,
        }
        let m = &k.matrix;
        let rows = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| Entry { row: i, col: j, value: m[(i, j)] }));
        self.csv(name, rows)
    }

    /// Row-major little-endian `f64` values in `<stem>.bin` with the shape and
    /// tags in `<stem>.json`.
    pub fn kernel_binary(&mut self, stem: &str, k: &OperatorKernel) -> Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            rows: usize,
            cols: usize,
            layout: &'static str,
            dtype: &'static str,
            domain: blockspin_core::Level,
            codomain: blockspin_core::Level,
            block: usize,
            weight: f64,
            symmetric: bool,
            row_sites: &'a [blockspin_core::Site],
            col_sites: &'a [blockspin_core::Site],
        }
        let m = &k.matrix;
        let path = self.path(&format!("{stem}.bin"));
        let mut f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        let mut bytes = Vec::with_capacity(8 * m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
        f.write_all(&bytes)?;
        self.json(
            &format!("{stem}.json"),
            &Header {
                rows: m.nrows(),
                cols: m.ncols(),
                layout: "row-major",
                dtype: "f64-le",
                domain: k.domain,
                codomain: k.codomain,
                block: k.block,
                weight: k.weight,
                symmetric: k.symmetric,
                row_sites: &k.row_sites,
                col_sites: &k.col_sites,
            },
        )
    }
}
