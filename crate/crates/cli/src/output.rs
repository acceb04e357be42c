//! Artifact directory: JSON documents, the CSV plot bundle and the manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use intertwine_core::chain::FactorChain;
use intertwine_core::factorize::{TEST_COUNT, TEST_SEED};
use intertwine_core::grid::GridPotential;
use intertwine_core::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::drivers::Outcome;

pub struct Artifacts {
    pub dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir.join("grids"))?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let mut w = BufWriter::new(fs::File::create(p)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(p, body)?;
        Ok(())
    }

    /// `x` against the real part of every potential, one column each.
    pub fn potentials_csv(&mut self, name: &str, pots: &[Arc<GridPotential>]) -> Result<()> {
        let Some(first) = pots.first() else { return Ok(()) };
        let g = first.grid().clone();
        if pots.iter().any(|p| p.grid().n != g.n) {
            return Err(Error::GridMismatch("potentials of one chain live on different grids".into()));
        }
        let p = self.path(name);
        let mut w = BufWriter::new(fs::File::create(p)?);
        let header: Vec<String> = (0..pots.len()).map(|k| format!("v{k}")).collect();
        writeln!(w, "x,{}", header.join(","))?;
        let cols: Vec<Vec<f64>> = pots.iter().map(|p| p.v.values().iter().map(|c| c.re).collect()).collect();
        for i in 0..g.n {
            let row: Vec<String> = cols.iter().map(|c| c[i].to_string()).collect();
            writeln!(w, "{},{}", g.x(i), row.join(","))?;
        }
        Ok(())
    }

    /// Every element of every kernel ladder of the chain.
    pub fn kernel_csvs(&mut self, c: &FactorChain) -> Result<()> {
        for (l, ladder) in c.ladders.iter().enumerate() {
            for f in ladder.top().ladder() {
                let p = self.path(&format!("grids/kernel_{l}_{}.csv", f.order));
                f.write_csv(&p)?;
            }
        }
        Ok(())
    }

    pub fn chain_bundle(&mut self, c: &FactorChain) -> Result<()> {
        self.potentials_csv("grids/potentials.csv", &c.potentials())?;
        self.kernel_csvs(c)
    }

    pub fn manifest(&mut self, cfg: &RunConfig, driver: &str, run: Option<&Outcome>, status: &str) -> Result<()> {
        let pots: &[Arc<GridPotential>] = run.map_or(&[], |o| &o.potentials);
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        let grid = pots.first().map(|p| {
            let g = p.grid();
            json!({ "half_width": g.half_width, "n": g.n, "dx": g.dx() })
        });
        let potentials: Vec<_> = pots
            .iter()
            .map(|p| {
                let k = p.check_class_k_window();
                json!({
                    "id": p.id,
                    "label": p.label,
                    "provenance": p.provenance,
                    "window_end": p.window_end,
                    "class_k": k.verdict,
                })
            })
            .collect();
        let m = json!({
            "tool": "intertwine",
            "version": env!("CARGO_PKG_VERSION"),
            "driver": driver,
            "status": status,
            "config": cfg,
            "grid": grid,
            "test_functions": {
                "count": TEST_COUNT,
                "seed": TEST_SEED,
                "family": "(1 + a1 x + a2 x^2 + a3 x^3) exp(-b (x - x0)^2), parameters drawn from ChaCha8 with the seed",
            },
            "potentials": potentials,
            "chain": run.and_then(|o| o.chain.as_ref()).map(chain_summary),
            "residuals": run.map(|o| &o.residuals),
            "files": files,
        });
        let p = self.dir.join("manifest.json");
        fs::write(p, serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(())
    }
}

/// Ordered factor records, the spectrum table and the normalizability
/// flags of every kernel element.
fn chain_summary(c: &FactorChain) -> serde_json::Value {
    let flags: Vec<_> = c
        .ladders
        .iter()
        .flat_map(|l| l.functions.iter())
        .map(|f| {
            json!({
                "lambda": [f.lambda.re, f.lambda.im],
                "order": f.order,
                "minus": f.norm_minus,
                "plus": f.norm_plus,
            })
        })
        .collect();
    json!({ "record": c.record(), "kernel_flags": flags })
}

/// JSON body describing a failed run.
pub fn diagnostic(kind: &str, message: &str, exit_code: i32, witness: Option<f64>, failures: &[String]) -> serde_json::Value {
    json!({
        "kind": kind,
        "message": message,
        "exit_code": exit_code,
        "witness": witness,
        "failures": failures,
    })
}
