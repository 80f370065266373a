use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use mstm_core::config::KeyValues;
use mstm_core::field::{encode_container, read_container};
use mstm_core::hydro::{generate_dataset, sequence_seeds, GeometryConfig, Preset};

use super::{parent_dir, sidecar_manifest, threads};
use crate::io::{load_config, output_path, write_atomic};
use crate::manifest::Recorder;
use crate::Global;

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// porous, lattice or lattice-toy.
    #[arg(long)]
    pub preset: Option<Preset>,
    /// Number of sequences.
    #[arg(long)]
    pub count: Option<usize>,
    /// Output container.
    #[arg(long)]
    pub out: PathBuf,
}

/// Geometry values fixed by the config instead of sampled.
#[derive(Default, Debug)]
struct Pins {
    porosity: Option<f64>,
    thickness: Option<f64>,
    diameter: Option<f64>,
    angle: Option<f64>,
    pitch: Option<f64>,
    flier_speed: Option<f64>,
    rho_solid: Option<f64>,
    gamma: Option<f64>,
    grid: Option<usize>,
    refine: Option<usize>,
    cfl: Option<f64>,
    cv: Option<f64>,
    ambient_pressure: Option<f64>,
}

impl Pins {
    fn take(kv: &mut KeyValues) -> Result<Self> {
        Ok(Self {
            porosity: kv.take("porosity")?,
            thickness: kv.take("thickness")?,
            diameter: kv.take("diameter")?,
            angle: kv.take("angle")?,
            pitch: kv.take("pitch")?,
            flier_speed: kv.take("flier_speed")?,
            rho_solid: kv.take("rho_solid")?,
            gamma: kv.take("gamma")?,
            grid: kv.take("grid")?,
            refine: kv.take("refine")?,
            cfl: kv.take("cfl")?,
            cv: kv.take("cv")?,
            ambient_pressure: kv.take("ambient_pressure")?,
        })
    }

    fn apply(&self, cfg: &mut GeometryConfig) {
        fn set<T: Copy>(dst: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *dst = v;
            }
        }
        set(&mut cfg.porosity, self.porosity);
        set(&mut cfg.thickness, self.thickness);
        set(&mut cfg.diameter, self.diameter);
        set(&mut cfg.angle, self.angle);
        set(&mut cfg.pitch, self.pitch);
        set(&mut cfg.flier_speed, self.flier_speed);
        set(&mut cfg.rho_solid, self.rho_solid);
        set(&mut cfg.gamma, self.gamma);
        set(&mut cfg.grid, self.grid);
        set(&mut cfg.refine, self.refine);
        set(&mut cfg.cfl, self.cfl);
        set(&mut cfg.cv, self.cv);
        set(&mut cfg.ambient_pressure, self.ambient_pressure);
    }
}

pub fn run(global: &Global, args: &GenerateArgs) -> Result<()> {
    let (mut kv, config_hash) = load_config(global)?;
    let cfg_preset: Option<Preset> = kv.take::<String>("preset")?.map(|s| s.parse()).transpose().map_err(anyhow::Error::msg)?;
    let cfg_count: Option<usize> = kv.take("count")?;
    let cfg_seed: Option<u64> = kv.take("seed")?;
    let pins = Pins::take(&mut kv)?;
    kv.finish()?;

    let preset = args.preset.or(cfg_preset).context("no preset given (--preset or `preset` in the config)")?;
    let count = args.count.or(cfg_count).context("no count given (--count or `count` in the config)")?;
    let seed = global.seed.or(cfg_seed).unwrap_or(0);

    let configs: Vec<GeometryConfig> = sequence_seeds(seed, count)
        .into_iter()
        .map(|s| {
            let mut cfg = preset.sample(s);
            pins.apply(&mut cfg);
            cfg
        })
        .collect();
    for (i, cfg) in configs.iter().enumerate() {
        cfg.validate().with_context(|| format!("sequence {i}: invalid configuration"))?;
    }

    let results = generate_dataset(&configs, threads(global));
    let mut sequences = Vec::with_capacity(count);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(seq) => sequences.push(seq),
            Err(e) => failures.push(format!("sequence {i}: {e}")),
        }
    }
    if !failures.is_empty() {
        bail!("solver aborted, no dataset written:\n  {}", failures.join("\n  "));
    }

    let out = output_path(global, &args.out);
    let bytes = encode_container(&sequences);
    write_atomic(&out, &bytes)?;
    let back = read_container(&out).with_context(|| format!("validating {}", out.display()))?;
    if back != sequences {
        bail!("{} does not read back to the generated data", out.display());
    }

    let mut rec = Recorder::new("generate", global, config_hash);
    rec.seed(seed);
    rec.dataset(&out)?;
    rec.artifact(&parent_dir(&out), &out)?;
    rec.finish(&sidecar_manifest(&out))?;
    eprintln!("wrote {} sequences ({}) to {}", sequences.len(), preset.name(), out.display());
    Ok(())
}
