//! Run manifest written alongside every command's outputs.

use serde::Serialize;

use mproj_core::error::Result;
use mproj_core::simulate::{seed_domain, stage_seed};

use crate::commands::{CmdOutcome, Ctx};

#[derive(Serialize)]
struct Manifest {
    app_version: String,
    config_hash: String,
    master_seed: u64,
    derived_seeds: DerivedSeeds,
    wall_ms: u128,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct DerivedSeeds {
    source: u64,
    resimulate: u64,
    oracle: u64,
}

pub fn write_manifest(ctx: &Ctx, outcome: &CmdOutcome) -> Result<()> {
    let m = Manifest {
        app_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: ctx.cfg.content_hash(),
        master_seed: ctx.cfg.seed,
        derived_seeds: DerivedSeeds {
            source: stage_seed(ctx.cfg.seed, seed_domain::SOURCE),
            resimulate: stage_seed(ctx.cfg.seed, seed_domain::RESIMULATE),
            oracle: stage_seed(ctx.cfg.seed, seed_domain::ORACLE),
        },
        wall_ms: ctx.started.elapsed().as_millis(),
        outputs: outcome.outputs.clone(),
    };
    let mut w =
        std::io::BufWriter::new(std::fs::File::create(ctx.out_dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &m)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}
