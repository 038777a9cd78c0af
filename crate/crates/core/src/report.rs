//! CSV and SVG artifacts of training runs.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::snn::{SpikeTrain, Weights};
use crate::train::{histogram, Trainer, TrialMetrics, LAYERS};

pub fn write_metrics_csv<W: Write>(metrics: &TrialMetrics, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "epoch,mse,firing_rate_hz,pulses_in,pulses_rec,pulses_out,refresh_in,refresh_rec,refresh_out"
    )?;
    for r in &metrics.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.mse,
            r.firing_rate_hz,
            r.pulses[0],
            r.pulses[1],
            r.pulses[2],
            r.refreshes[0],
            r.refreshes[1],
            r.refreshes[2]
        )?;
    }
    Ok(())
}

pub fn write_weights_csv<W: Write>(weights: &Weights, mut out: W) -> std::io::Result<()> {
    writeln!(out, "layer,row,col,effective_weight")?;
    for (name, w) in LAYERS.iter().zip([&weights.w_in, &weights.w_rec, &weights.w_out]) {
        for ((r, c), v) in w.indexed_iter() {
            writeln!(out, "{name},{r},{c},{v}")?;
        }
    }
    Ok(())
}

/// Histogram of effective weights per layer over `[-1, 1]`.
pub fn write_weight_histogram_csv<W: Write>(
    weights: &Weights,
    bins: usize,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "layer,bin_low,bin_high,count")?;
    let width = 2.0 / bins as f64;
    for (name, w) in LAYERS.iter().zip([&weights.w_in, &weights.w_rec, &weights.w_out]) {
        let counts = histogram(w.iter().copied(), bins, -1.0, 1.0);
        for (b, n) in counts.iter().enumerate() {
            let lo = -1.0 + b as f64 * width;
            writeln!(out, "{name},{lo},{},{n}", lo + width)?;
        }
    }
    Ok(())
}

/// `t,target_0,output_0,...` with `t` in seconds.
pub fn write_trace_csv<W: Write>(
    target: &Array2<f64>,
    output: &Array2<f64>,
    dt: f64,
    mut out: W,
) -> std::io::Result<()> {
    let n_out = target.ncols();
    let header: Vec<String> = (0..n_out)
        .flat_map(|k| [format!("target_{k}"), format!("output_{k}")])
        .collect();
    writeln!(out, "t,{}", header.join(","))?;
    for (s, (tr, yr)) in target.rows().into_iter().zip(output.rows()).enumerate() {
        write!(out, "{}", s as f64 * dt)?;
        for (a, b) in tr.iter().zip(yr.iter()) {
            write!(out, ",{a},{b}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

const W: f64 = 640.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    s
}

/// Line chart of one or more equally sampled series sharing the axes.
pub fn line_chart_svg(title: &str, series: &[(&str, &[f64])], log_y: bool) -> String {
    let tf = |v: f64| if log_y { v.max(1e-12).log10() } else { v };
    let finite = series
        .iter()
        .flat_map(|(_, ys)| ys.iter().copied().map(tf))
        .filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = match (lo.is_finite(), hi > lo) {
        (true, true) => (lo, hi),
        (true, false) => (lo - 1.0, lo + 1.0),
        (false, _) => (-1.0, 1.0),
    };
    let len = series.iter().map(|(_, ys)| ys.len()).max().unwrap_or(0).max(2);
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (len - 1) as f64;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (tf(v) - lo) / (hi - lo);

    let mut s = svg_open(title);
    let fmt_tick = |v: f64| if log_y { format!("1e{v:.1}") } else { format!("{v:.3}") };
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
        PAD - 4.0,
        PAD + 4.0,
        fmt_tick(hi)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
        PAD - 4.0,
        H - PAD,
        fmt_tick(lo)
    );
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = ys
            .iter()
            .enumerate()
            .filter(|(_, v)| tf(**v).is_finite())
            .map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{name}</text>"#,
            PAD + 8.0,
            PAD + 14.0 * (k + 1) as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Spike raster, one dot per event.
pub fn raster_svg(title: &str, raster: &SpikeTrain) -> String {
    let steps = raster.steps().max(1) as f64;
    let chans = raster.channels().max(1) as f64;
    let mut s = svg_open(title);
    for t in 0..raster.steps() {
        for (ch, _) in raster.row(t).iter().enumerate().filter(|(_, &b)| b) {
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="1.5" height="1.5" fill="black"/>"#,
                PAD + (W - 2.0 * PAD) * t as f64 / steps,
                PAD + (H - 2.0 * PAD) * ch as f64 / chans
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(&path, e))
}

fn write_with<F>(dir: &Path, name: &str, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut out = create(dir, name)?;
    f(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(dir.join(name), e))
}

/// Write every artifact of a finished run into `dir`.
pub fn write_run_outputs(trainer: &mut Trainer, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = trainer.config().clone();
    write_with(dir, "config.toml", |o| o.write_all(cfg.to_toml().as_bytes()))?;
    let metrics = trainer.metrics().clone();
    write_with(dir, "metrics.csv", |o| write_metrics_csv(&metrics, o))?;
    let weights = trainer.read_weights()?;
    write_with(dir, "weights_final.csv", |o| write_weights_csv(&weights, o))?;
    write_with(dir, "weights_hist.csv", |o| write_weight_histogram_csv(&weights, 40, o))?;
    for (name, xbar) in LAYERS.iter().zip(trainer.crossbars()) {
        write_with(dir, &format!("devices_{name}.csv"), |o| xbar.write_csv(o))?;
    }

    let mse: Vec<f64> = metrics.records.iter().map(|r| r.mse).collect();
    let rate: Vec<f64> = metrics.records.iter().map(|r| r.firing_rate_hz).collect();
    write_with(dir, "loss.svg", |o| {
        o.write_all(line_chart_svg("training loss (MSE)", &[("mse", &mse)], true).as_bytes())
    })?;
    write_with(dir, "firing_rate.svg", |o| {
        o.write_all(line_chart_svg("mean firing rate (Hz)", &[("rate", &rate)], false).as_bytes())
    })?;
    if let Some(out) = trainer.last_output() {
        let target = trainer.target();
        write_with(dir, "trace.csv", |o| write_trace_csv(target, &out.y, cfg.net.dt, o))?;
        write_with(dir, "raster.csv", |o| out.raster.write_events_csv(o))?;
        let t0: Vec<f64> = target.column(0).to_vec();
        let y0: Vec<f64> = out.y.column(0).to_vec();
        write_with(dir, "output.svg", |o| {
            let svg = line_chart_svg(
                "target vs generated",
                &[("target", &t0), ("output", &y0)],
                false,
            );
            o.write_all(svg.as_bytes())
        })?;
        write_with(dir, "raster.svg", |o| {
            o.write_all(raster_svg("recurrent spikes (last epoch)", &out.raster).as_bytes())
        })?;
    }
    Ok(())
}
