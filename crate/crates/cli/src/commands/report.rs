use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use super::evaluate::{QOI_FIELDS, QOI_METRICS};
use crate::io::{ensure_dir, hash_file, load_config, output_path, write_atomic};
use crate::manifest::Recorder;
use crate::plot::{render, Series};
use crate::Global;

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory written by `evaluate`.
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub metric: String,
    pub field: String,
    pub timestep: usize,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub line: String,
}

pub fn parse_curves(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    let header = lines.next().context("curves.csv is empty")?;
    if header.trim() != "metric,field,timestep,mean,std,count" {
        bail!("unexpected curves.csv header {header:?}");
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            bail!("curves.csv line {}: expected 6 columns", i + 2);
        }
        let bad = |what: &str| format!("curves.csv line {}: bad {what}", i + 2);
        rows.push(CurveRow {
            metric: cols[0].to_owned(),
            field: cols[1].to_owned(),
            timestep: cols[2].parse().with_context(|| bad("timestep"))?,
            mean: cols[3].parse().with_context(|| bad("mean"))?,
            std: cols[4].parse().with_context(|| bad("std"))?,
            count: cols[5].parse().with_context(|| bad("count"))?,
            line: line.to_owned(),
        });
    }
    Ok(rows)
}

/// Curves worth a plot: every all-field curve plus the masked moments of
/// the quantities of interest.
fn selected(row: &CurveRow) -> bool {
    row.field == "all" || (QOI_FIELDS.iter().any(|f| f.name() == row.field) && QOI_METRICS.contains(&row.metric.as_str()))
}

pub fn plot_name(metric: &str, field: &str) -> String {
    if field == "all" {
        format!("{metric}.png")
    } else {
        format!("{metric}_{field}.png")
    }
}

pub fn run(global: &Global, args: &ReportArgs) -> Result<()> {
    let (kv, config_hash) = load_config(global)?;
    kv.finish()?;
    let curves_path = args.metrics.join("curves.csv");
    let text = std::fs::read_to_string(&curves_path).with_context(|| format!("reading {}", curves_path.display()))?;
    let rows: Vec<CurveRow> = parse_curves(&text)?.into_iter().filter(selected).collect();
    if rows.is_empty() {
        bail!("{} holds no curves to plot", curves_path.display());
    }

    let mut series: BTreeMap<(String, String), Series> = BTreeMap::new();
    for r in &rows {
        let s = series.entry((r.metric.clone(), r.field.clone())).or_insert_with(|| Series {
            x: vec![],
            mean: vec![],
            std: vec![],
        });
        s.x.push(r.timestep as f64);
        s.mean.push(r.mean);
        s.std.push(r.std);
    }

    let out = output_path(global, &args.out);
    ensure_dir(&out)?;
    let mut rec = Recorder::new("report", global, config_hash);
    rec.dataset(&curves_path)?;
    let mut data = String::from("metric,field,timestep,mean,std,count\n");
    for r in &rows {
        data.push_str(&r.line);
        data.push('\n');
    }
    let data_path = out.join("plot_data.csv");
    write_atomic(&data_path, data.as_bytes())?;
    let mut names = vec!["plot_data.csv".to_owned()];
    for ((metric, field), s) in &series {
        let title = if field == "all" {
            format!("{metric} (mean +/- 1 std)")
        } else {
            format!("{metric} {field} (mean +/- 1 std)")
        };
        let name = plot_name(metric, field);
        let bytes = render(&title, s).to_png()?;
        let path = out.join(&name);
        write_atomic(&path, &bytes)?;
        if hash_file(&path)? != crate::io::sha256_hex(&bytes) {
            bail!("{} does not read back", path.display());
        }
        names.push(name);
    }
    names.sort();
    for name in &names {
        rec.artifact(&out, &out.join(name))?;
    }
    rec.finish(&out.join("manifest.json"))?;
    eprintln!("wrote {} plots to {}", series.len(), out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_selects() {
        let text = "metric,field,timestep,mean,std,count\n\
                    mse,all,5,1e-2,1e-3,4\n\
                    mse,density,5,1e-2,1e-3,2\n\
                    truth_mean,temperature,5,3e2,1e1,2\n\
                    ssim,all,6,NaN,0e0,1\n";
        let rows = parse_curves(text).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[3].mean.is_nan());
        let kept: Vec<_> = rows.iter().filter(|r| selected(r)).map(|r| (r.metric.as_str(), r.field.as_str())).collect();
        assert_eq!(kept, [("mse", "all"), ("truth_mean", "temperature"), ("ssim", "all")]);
        assert!(parse_curves("a,b\n").is_err());
        assert!(parse_curves("metric,field,timestep,mean,std,count\nmse,all,x,1,1,1\n").is_err());
    }
}
