//! Run artifacts: draw files, JSON summaries, replicate tables and SVG plots.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::filter::FilteredMoments;
use crate::math::quantile_sorted;
use crate::pmmh::RunRecord;
use crate::runner::{ReplicateResult, ReplicateSummary, RunError};

fn io(e: impl std::fmt::Display) -> RunError {
    RunError::Io(e.to_string())
}

/// Writes `iteration, <params...>, log_lik, log_prior, accepted`. Timings are
/// left out so the file depends only on configuration and seed.
pub fn write_draws<W: Write>(record: &RunRecord, w: W) -> Result<(), RunError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["iteration".to_string()];
    header.extend(record.names.iter().cloned());
    header.extend(["log_lik", "log_prior", "accepted"].map(String::from));
    wtr.write_record(&header).map_err(io)?;
    for i in 0..record.len() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(record.draws[i].iter().map(|v| v.to_string()));
        row.push(record.log_lik[i].to_string());
        row.push(record.log_prior[i].to_string());
        row.push(u8::from(record.accepted[i]).to_string());
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush().map_err(io)?;
    Ok(())
}

/// Writes a replicate's files into `dir`.
pub fn write_replicate(dir: &Path, result: &ReplicateResult, plots: bool) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(io)?;
    let f = std::fs::File::create(dir.join("draws.csv")).map_err(io)?;
    write_draws(&result.record, std::io::BufWriter::new(f))?;
    let json = serde_json::to_string_pretty(&result.summary).map_err(io)?;
    std::fs::write(dir.join("summary.json"), json + "\n").map_err(io)?;
    if plots && !result.record.is_empty() {
        std::fs::write(dir.join("trace.svg"), trace_svg(&result.record)).map_err(io)?;
        std::fs::write(dir.join("histogram.svg"), histogram_svg(&result.record, result.summary.diagnostics.burn_in))
            .map_err(io)?;
        if let Some(m) = &result.states {
            if !m.mean.is_empty() {
                std::fs::write(dir.join("states.svg"), states_svg(m)).map_err(io)?;
            }
        }
    }
    Ok(())
}

/// Median and interquartile range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Spread {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Spread { median: f64::NAN, q25: f64::NAN, q75: f64::NAN };
        }
        v.sort_by(f64::total_cmp);
        Spread { median: quantile_sorted(&v, 0.5), q25: quantile_sorted(&v, 0.25), q75: quantile_sorted(&v, 0.75) }
    }

    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

/// One row of the replicate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: String,
    pub sampler: String,
    pub filter: String,
    pub particles: usize,
    pub replicates: usize,
    pub acceptance: Spread,
    pub if_min: Spread,
    pub if_median: Spread,
    pub if_max: Spread,
    pub ect: Spread,
    pub log_p_bs: Option<Spread>,
    pub log_p_is: Option<Spread>,
}

/// Aggregates replicate summaries of one configuration.
pub fn aggregate(summaries: &[ReplicateSummary]) -> AggregateRow {
    let col = |f: &dyn Fn(&ReplicateSummary) -> f64| Spread::of(&summaries.iter().map(f).collect::<Vec<_>>());
    let ev = |f: &dyn Fn(&crate::evidence::EvidenceEstimate) -> f64| {
        let v: Vec<f64> = summaries.iter().filter_map(|s| s.evidence.as_ref().map(f)).collect();
        (!v.is_empty()).then(|| Spread::of(&v))
    };
    let first = summaries.first();
    AggregateRow {
        model: first.map(|s| s.model.clone()).unwrap_or_default(),
        sampler: first.map(|s| s.sampler.clone()).unwrap_or_default(),
        filter: first.map(|s| s.filter.clone()).unwrap_or_default(),
        particles: first.map_or(0, |s| s.particles),
        replicates: summaries.len(),
        acceptance: col(&|s| s.diagnostics.acceptance_rate),
        if_min: col(&|s| s.diagnostics.if_min),
        if_median: col(&|s| s.diagnostics.if_median),
        if_max: col(&|s| s.diagnostics.if_max),
        ect: col(&|s| s.diagnostics.ect),
        log_p_bs: ev(&|e| e.log_p_bs),
        log_p_is: ev(&|e| e.log_p_is),
    }
}

fn cell(s: &Spread) -> String {
    if s.median.is_nan() {
        "-".into()
    } else {
        format!("{:.2} ({:.2})", s.median, s.iqr())
    }
}

/// Markdown table: median with IQR in parentheses across replicates.
pub fn table_markdown(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| Model | Sampler | Filter | M | Reps | Acc. rate | IF min | IF median | IF max | ECT | log p(y) BS | log p(y) IS |");
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|---|---|");
    for r in rows {
        let ev = |s: &Option<Spread>| s.as_ref().map_or("-".into(), |s| format!("{:.3} ({:.3})", s.median, s.iqr()));
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.model,
            r.sampler,
            r.filter,
            r.particles,
            r.replicates,
            cell(&r.acceptance),
            cell(&r.if_min),
            cell(&r.if_median),
            cell(&r.if_max),
            cell(&r.ect),
            ev(&r.log_p_bs),
            ev(&r.log_p_is)
        );
    }
    out
}

/// Reads `summary.json` files below `dir` (`dir` itself or `rep_*/`).
pub fn read_summaries(dir: &Path) -> Result<Vec<serde_json::Value>, RunError> {
    let direct = dir.join("summary.json");
    let mut paths = Vec::new();
    if dir.is_file() {
        paths.push(dir.to_path_buf());
    } else if direct.exists() {
        paths.push(direct);
    } else {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("summary.json").exists())
            .collect();
        entries.sort();
        paths.extend(entries.into_iter().map(|p| p.join("summary.json")));
    }
    if paths.is_empty() {
        return Err(RunError::Io(format!("{}: no summary.json found", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| RunError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| RunError::Io(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Log evidence of one run: the median over its replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSummary {
    pub label: String,
    pub model: String,
    pub log_p_bs: f64,
    pub log_p_is: f64,
    pub replicates: usize,
}

/// Median log evidence over replicate summaries read with [`read_summaries`].
pub fn evidence_of(label: &str, summaries: &[serde_json::Value]) -> Result<EvidenceSummary, RunError> {
    let pick = |key: &str| -> Vec<f64> {
        summaries.iter().filter_map(|s| s.get("evidence").and_then(|e| e.get(key)).and_then(|v| v.as_f64())).collect()
    };
    let (bs, is) = (pick("log_p_bs"), pick("log_p_is"));
    if bs.is_empty() {
        return Err(RunError::Io(format!("{label}: summaries carry no evidence estimate")));
    }
    let model = summaries[0].get("model").and_then(|m| m.as_str()).unwrap_or("?").to_string();
    Ok(EvidenceSummary {
        label: label.to_string(),
        model,
        log_p_bs: Spread::of(&bs).median,
        log_p_is: Spread::of(&is).median,
        replicates: bs.len(),
    })
}

/// Table of log evidence and log Bayes factors against the first entry.
pub fn comparison_markdown(runs: &[EvidenceSummary]) -> String {
    let mut out = String::from("| Run | Model | Reps | log p(y) BS | log p(y) IS | log BF (BS) | log BF (IS) |\n|---|---|---|---|---|---|---|\n");
    if let Some(base) = runs.first() {
        for r in runs {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.3} |",
                r.label,
                r.model,
                r.replicates,
                r.log_p_bs,
                r.log_p_is,
                r.log_p_bs - base.log_p_bs,
                r.log_p_is - base.log_p_is
            );
        }
    }
    out
}

// ---- SVG ----

const W: f64 = 640.0;
const PANEL_H: f64 = 120.0;
const PAD: f64 = 40.0;

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn polyline(xs: &[f64], ys: &[f64], x0: f64, y0: f64, w: f64, h: f64, color: &str) -> String {
    let (xl, xh) = range(xs.iter().copied());
    let (yl, yh) = range(ys.iter().copied());
    let step = (xs.len() / 2000).max(1);
    let mut pts = String::new();
    for i in (0..xs.len()).step_by(step) {
        if !ys[i].is_finite() {
            continue;
        }
        let px = x0 + (xs[i] - xl) / (xh - xl) * w;
        let py = y0 + h - (ys[i] - yl) / (yh - yl) * h;
        let _ = write!(pts, "{px:.1},{py:.1} ");
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>\n", pts.trim_end())
}

fn label(x: f64, y: f64, text: &str) -> String {
    format!("<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"11\">{text}</text>\n")
}

fn document(height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{height}\" viewBox=\"0 0 {W} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// One trace panel per parameter.
pub fn trace_svg(record: &RunRecord) -> String {
    let mut body = String::new();
    let xs: Vec<f64> = (1..=record.len()).map(|i| i as f64).collect();
    for (k, name) in record.names.iter().enumerate() {
        let y0 = k as f64 * PANEL_H + 10.0;
        let col = record.column(k);
        let (lo, hi) = range(col.iter().copied());
        body += &label(4.0, y0 + 12.0, name);
        body += &label(4.0, y0 + 26.0, &format!("[{lo:.3}, {hi:.3}]"));
        body += &polyline(&xs, &col, PAD * 3.0, y0, W - PAD * 3.0 - 10.0, PANEL_H - 20.0, "#1f4e9c");
    }
    document(record.names.len() as f64 * PANEL_H + 10.0, &body)
}

/// Histograms of each parameter after burn-in.
pub fn histogram_svg(record: &RunRecord, burn_in: usize) -> String {
    let bins = 40;
    let mut body = String::new();
    for (k, name) in record.names.iter().enumerate() {
        let y0 = k as f64 * PANEL_H + 10.0;
        let col: Vec<f64> = record.draws[burn_in.min(record.len())..].iter().map(|r| r[k]).collect();
        let (lo, hi) = range(col.iter().copied());
        let mut counts = vec![0usize; bins];
        for v in &col {
            let b = (((v - lo) / (hi - lo)) * bins as f64).floor() as isize;
            counts[b.clamp(0, bins as isize - 1) as usize] += 1;
        }
        let max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
        let (x0, w, h) = (PAD * 3.0, W - PAD * 3.0 - 10.0, PANEL_H - 20.0);
        let bw = w / bins as f64;
        body += &label(4.0, y0 + 12.0, name);
        body += &label(4.0, y0 + 26.0, &format!("[{lo:.3}, {hi:.3}]"));
        for (b, c) in counts.iter().enumerate() {
            let bh = *c as f64 / max * h;
            let _ = writeln!(
                body,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{bh:.1}\" fill=\"#7a9cc6\"/>",
                x0 + b as f64 * bw,
                y0 + h - bh,
                bw * 0.9
            );
        }
    }
    document(record.names.len() as f64 * PANEL_H + 10.0, &body)
}

/// Filtered state mean with a two-standard-deviation band.
pub fn states_svg(m: &FilteredMoments) -> String {
    let n = m.mean.len();
    let lo: Vec<f64> = m.mean.iter().zip(&m.var).map(|(a, v)| a - 2.0 * v.max(0.0).sqrt()).collect();
    let hi: Vec<f64> = m.mean.iter().zip(&m.var).map(|(a, v)| a + 2.0 * v.max(0.0).sqrt()).collect();
    let (yl, yh) = range(lo.iter().chain(&hi).copied());
    let (x0, y0, w, h) = (PAD, 10.0, W - PAD - 10.0, 260.0);
    let px = |i: usize| x0 + if n > 1 { i as f64 / (n - 1) as f64 * w } else { 0.0 };
    let py = |v: f64| y0 + h - (v - yl) / (yh - yl) * h;
    let mut band = String::new();
    for (i, v) in hi.iter().enumerate() {
        let _ = write!(band, "{:.1},{:.1} ", px(i), py(*v));
    }
    for (i, v) in lo.iter().enumerate().rev() {
        let _ = write!(band, "{:.1},{:.1} ", px(i), py(*v));
    }
    let mut body = format!("<polygon fill=\"#c6d5ea\" stroke=\"none\" points=\"{}\"/>\n", band.trim_end());
    let mut line = String::new();
    for (i, v) in m.mean.iter().enumerate() {
        let _ = write!(line, "{:.1},{:.1} ", px(i), py(*v));
    }
    let _ = writeln!(body, "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1\" points=\"{}\"/>", line.trim_end());
    body += &label(4.0, 290.0, &format!("filtered state mean +/- 2 sd, range [{yl:.3}, {yh:.3}]"));
    document(300.0, &body)
}
