//! SVG figures from run outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use plotters::prelude::*;

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| anyhow!("{} is empty", path.display()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("missing column {name}"))
    }

    fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.col(name)?;
        Ok(self.rows.iter().map(|r| r.get(k).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)).collect())
    }

    fn strings(&self, name: &str) -> Result<Vec<String>> {
        let k = self.col(name)?;
        Ok(self.rows.iter().map(|r| r.get(k).cloned().unwrap_or_default()).collect())
    }
}

type Series = (String, Vec<(f64, f64)>);

fn bounds(series: &[Series]) -> Option<((f64, f64), (f64, f64))> {
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return None;
    }
    let pad = |a: f64, b: f64| {
        let d = if b > a { 0.05 * (b - a) } else { 0.5 * a.abs().max(1e-3) };
        (a - d, b + d)
    };
    Some((pad(x0, x1), pad(y0, y1)))
}

fn line_panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
) -> Result<()>
where
    DB::ErrorType: 'static,
{
    let Some(((x0, x1), (y0, y1))) = bounds(series) else {
        return Ok(());
    };
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(55)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc(xlabel)
        .y_desc(ylabel)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied().filter(|p| p.1.is_finite()), color.stroke_width(2)))
            .map_err(|e| anyhow!("{e}"))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    if series.len() > 1 || !series[0].0.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
    }
    Ok(())
}

/// Current and voltage profiles of every trace file.
fn charge_profiles(dir: &Path, traces: &[PathBuf]) -> Result<PathBuf> {
    let mut current = Vec::new();
    let mut voltage = Vec::new();
    for path in traces {
        let t = Table::read(path)?;
        let time = t.floats("t_s")?;
        let t0 = time.first().copied().unwrap_or(0.0);
        let minutes: Vec<f64> = time.iter().map(|x| (x - t0) / 60.0).collect();
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("trace")
            .trim_start_matches("trace_")
            .to_string();
        current.push((name.clone(), minutes.iter().copied().zip(t.floats("I_A")?).collect()));
        voltage.push((name, minutes.into_iter().zip(t.floats("V_V")?).collect()));
    }
    let out = dir.join("charge_profiles.svg");
    let root = SVGBackend::new(&out, (900, 800)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let panels = root.split_evenly((2, 1));
    line_panel(&panels[0], "Charging current", "time (min)", "current (A)", &current)?;
    line_panel(&panels[1], "Terminal voltage", "time (min)", "voltage (V)", &voltage)?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(out.clone())
}

fn training_curve(dir: &Path, log: &Path) -> Result<PathBuf> {
    let t = Table::read(log)?;
    let ep = t.floats("episode")?;
    let reward: Vec<(f64, f64)> = ep.iter().copied().zip(t.floats("reward")?).collect();
    let minutes: Vec<(f64, f64)> = ep.iter().copied().zip(t.floats("charge_minutes")?).collect();
    let out = dir.join("training_curve.svg");
    let root = SVGBackend::new(&out, (900, 800)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let panels = root.split_evenly((2, 1));
    line_panel(&panels[0], "Evaluation reward", "episode", "reward", &[(String::new(), reward)])?;
    line_panel(&panels[1], "Evaluation charge time", "episode", "minutes", &[(String::new(), minutes)])?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(out.clone())
}

fn bar_panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    ylabel: &str,
    names: &[String],
    values: &[f64],
) -> Result<()>
where
    DB::ErrorType: 'static,
{
    let top = values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max) * 1.15 + 1e-9;
    let n = names.len();
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(55)
        .build_cartesian_2d((0..n).into_segmented(), 0.0..top)
        .map_err(|e| anyhow!("{e}"))?;
    let labels = names.to_vec();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .y_desc(ylabel)
        .x_label_formatter(&move |v| match v {
            SegmentValue::CenterOf(k) => labels.get(*k).cloned().unwrap_or_default(),
            _ => String::new(),
        })
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .draw_series(values.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(k, &v)| {
            let color = PALETTE[k % PALETTE.len()];
            let mut bar = Rectangle::new([(SegmentValue::Exact(k), 0.0), (SegmentValue::Exact(k + 1), v)], color.filled());
            bar.set_margin(0, 0, 12, 12);
            bar
        }))
        .map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

fn strategy_summary(dir: &Path, summary: &Path) -> Result<PathBuf> {
    let t = Table::read(summary)?;
    let names = t.strings("strategy")?;
    let out = dir.join("strategy_summary.svg");
    let root = SVGBackend::new(&out, (900, 800)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let panels = root.split_evenly((2, 1));
    bar_panel(&panels[0], "Equivalent full cycles to end of life", "EFC", &names, &t.floats("max_efc")?)?;
    bar_panel(&panels[1], "Average charge time", "minutes", &names, &t.floats("average_charge_minutes")?)?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(out.clone())
}

fn ageing(dir: &Path, cycles: &Path) -> Result<PathBuf> {
    let t = Table::read(cycles)?;
    let names = t.strings("strategy")?;
    let efc = t.floats("efc")?;
    let soh = t.floats("soh")?;
    let minutes = t.floats("charge_minutes")?;
    let mut by_soh: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut by_time: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for k in 0..names.len() {
        by_soh.entry(names[k].clone()).or_default().push((efc[k], soh[k] * 100.0));
        by_time.entry(names[k].clone()).or_default().push((efc[k], minutes[k]));
    }
    let out = dir.join("ageing.svg");
    let root = SVGBackend::new(&out, (900, 800)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let panels = root.split_evenly((2, 1));
    line_panel(&panels[0], "State of health", "EFC", "SoH (%)", &by_soh.into_iter().collect::<Vec<_>>())?;
    line_panel(&panels[1], "Charge time per cycle", "EFC", "minutes", &by_time.into_iter().collect::<Vec<_>>())?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(out.clone())
}

fn voltage_map(dir: &Path, map: &Path) -> Result<PathBuf> {
    let t = Table::read(map)?;
    let pts: Vec<(f64, f64)> = t
        .floats("soh")?
        .into_iter()
        .map(|s| s * 100.0)
        .zip(t.floats("v_cutoff_V")?)
        .collect();
    let out = dir.join("voltage_soh_map.svg");
    let root = SVGBackend::new(&out, (900, 450)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    line_panel(&root, "Cut-off voltage against state of health", "SoH (%)", "V_cutoff (V)", &[(String::new(), pts)])?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(out.clone())
}

/// Renders every figure whose inputs exist in `dir`.
pub fn render_all(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut traces: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("trace_"))
        })
        .collect();
    traces.sort();
    if !traces.is_empty() {
        written.push(charge_profiles(dir, &traces)?);
    }
    let inputs: [(&str, fn(&Path, &Path) -> Result<PathBuf>); 4] = [
        ("training_log.csv", training_curve),
        ("summary.csv", strategy_summary),
        ("cycles.csv", ageing),
        ("voltage_soh_map.csv", voltage_map),
    ];
    for (name, render) in inputs {
        let path = dir.join(name);
        if path.exists() {
            written.push(render(dir, &path)?);
        }
    }
    Ok(written)
}
