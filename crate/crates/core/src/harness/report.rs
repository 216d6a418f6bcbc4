//! CSV, summary table and score-curve plot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::run::RunMetrics;
use crate::control::Variant;
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.md";
pub const PLOT_FILE: &str = "curves.svg";

const COLUMNS: [&str; 7] = [
    "variant",
    "seed",
    "episode",
    "score",
    "avg100",
    "max_seen",
    "phase1_steps",
];
const GAME_MAX_KEY: &str = "game_max = ";

/// One CSV line.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub variant: Variant,
    pub seed: u64,
    pub episode: usize,
    pub score: f64,
    pub avg100: f64,
    pub max_seen: f64,
    pub phase1_steps: usize,
}

pub fn rows(runs: &[RunMetrics]) -> Vec<Row> {
    let mut out = Vec::new();
    for run in runs {
        for (log, avg) in run.episodes.iter().zip(run.avg_curve()) {
            out.push(Row {
                variant: run.variant,
                seed: run.seed,
                episode: log.episode,
                score: log.score,
                avg100: avg,
                max_seen: log.max_seen,
                phase1_steps: log.phase1_steps,
            });
        }
    }
    out
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Metrics CSV text. Header comments echo the config; the output depends
/// only on the config and the runs' episode logs.
pub fn metrics_csv(config: &ExperimentConfig, runs: &[RunMetrics]) -> Result<String> {
    let mut s = String::new();
    for line in config.to_text().lines() {
        let _ = writeln!(s, "# {line}");
    }
    if let Some(run) = runs.first() {
        let _ = writeln!(s, "# {GAME_MAX_KEY}{}", run.game_max);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in rows(runs) {
        w.write_record([
            r.variant.to_string(),
            r.seed.to_string(),
            r.episode.to_string(),
            r.score.to_string(),
            r.avg100.to_string(),
            r.max_seen.to_string(),
            r.phase1_steps.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    s.push_str(&String::from_utf8_lossy(&body));
    Ok(s)
}

/// Parses a metrics CSV back into rows plus the recorded game maximum.
pub fn parse_metrics(text: &str) -> Result<(Vec<Row>, Option<f64>)> {
    let game_max = text
        .lines()
        .filter_map(|l| l.strip_prefix("# ")?.strip_prefix(GAME_MAX_KEY))
        .find_map(|v| v.trim().parse().ok());
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let bad = |what: &str, v: &str| Error::Config(format!("bad {what} `{v}` in metrics CSV"));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != COLUMNS.len() {
            return Err(Error::Config(format!(
                "expected {} columns, got {}",
                COLUMNS.len(),
                rec.len()
            )));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(COLUMNS[i], &rec[i]));
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(COLUMNS[i], &rec[i]));
        out.push(Row {
            variant: rec[0].parse()?,
            seed: int(1)?,
            episode: int(2)? as usize,
            score: num(3)?,
            avg100: num(4)?,
            max_seen: num(5)?,
            phase1_steps: int(6)? as usize,
        });
    }
    Ok((out, game_max))
}

/// Final `Avg` and `Max` of one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub avg: f64,
    pub max: f64,
}

/// Per-variant aggregate over seeds. Standard deviations are population ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub variant: Variant,
    pub seeds: Vec<SeedResult>,
    pub avg_mean: f64,
    pub avg_std: f64,
    pub max_mean: f64,
    pub max_std: f64,
    /// `avg_mean / game_max`.
    pub normalized: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn summarize(variant: Variant, seeds: Vec<SeedResult>, game_max: f64) -> Summary {
    let avgs: Vec<f64> = seeds.iter().map(|s| s.avg).collect();
    let maxs: Vec<f64> = seeds.iter().map(|s| s.max).collect();
    let (avg_mean, avg_std) = mean_std(&avgs);
    let (max_mean, max_std) = mean_std(&maxs);
    Summary {
        variant,
        seeds,
        avg_mean,
        avg_std,
        max_mean,
        max_std,
        normalized: avg_mean / game_max,
    }
}

fn by_variant<T>(items: impl IntoIterator<Item = (Variant, T)>) -> Vec<(Variant, Vec<T>)> {
    let mut groups: Vec<(Variant, Vec<T>)> = Vec::new();
    for (v, x) in items {
        match groups.iter_mut().find(|(g, _)| *g == v) {
            Some((_, xs)) => xs.push(x),
            None => groups.push((v, vec![x])),
        }
    }
    groups
}

pub fn summaries(runs: &[RunMetrics]) -> Vec<Summary> {
    let game_max = runs.first().map_or(1.0, |r| r.game_max);
    by_variant(runs.iter().map(|r| {
        (
            r.variant,
            SeedResult {
                seed: r.seed,
                avg: r.avg(),
                max: r.max(),
            },
        )
    }))
    .into_iter()
    .map(|(v, seeds)| summarize(v, seeds, game_max))
    .collect()
}

/// Summaries recomputed from CSV rows alone: each run's last row carries
/// its final `avg100` and `max_seen`.
pub fn summaries_from_rows(rows: &[Row], game_max: f64) -> Vec<Summary> {
    let mut last: BTreeMap<(usize, u64), &Row> = BTreeMap::new();
    let order: Vec<Variant> = by_variant(rows.iter().map(|r| (r.variant, ())))
        .into_iter()
        .map(|(v, _)| v)
        .collect();
    for r in rows {
        let key = (order.iter().position(|v| *v == r.variant).unwrap_or(0), r.seed);
        let e = last.entry(key).or_insert(r);
        if r.episode >= e.episode {
            *e = r;
        }
    }
    by_variant(last.values().map(|r| {
        (
            r.variant,
            SeedResult {
                seed: r.seed,
                avg: r.avg100,
                max: r.max_seen,
            },
        )
    }))
    .into_iter()
    .map(|(v, seeds)| summarize(v, seeds, game_max))
    .collect()
}

pub fn summary_table(summaries: &[Summary]) -> String {
    let mut s = String::from("| variant | seeds | Avg | Max | normalized |\n|---|---|---|---|---|\n");
    for x in summaries {
        let _ = writeln!(
            s,
            "| {} | {} | {:.2} ({:.2}) | {:.2} ({:.2}) | {:.1}% |",
            x.variant,
            x.seeds.len(),
            x.avg_mean,
            x.avg_std,
            x.max_mean,
            x.max_std,
            100.0 * x.normalized
        );
    }
    s
}

const PALETTE: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
];

/// SVG line plot of the seed-averaged running `Avg` per variant.
pub fn curves_svg(rows: &[Row], game_max: f64) -> String {
    let (w, h, pad) = (720.0, 420.0, 50.0);
    let groups = by_variant(rows.iter().map(|r| (r.variant, r)));
    let max_ep = rows.iter().map(|r| r.episode).max().unwrap_or(1).max(1) as f64;
    let y_top = if game_max > 0.0 { game_max } else { 1.0 };
    let x = |e: f64| pad + (w - 2.0 * pad) * e / max_ep;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v / y_top).clamp(0.0, 1.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{p} {t} V{b} H{r}" stroke="black" fill="none"/>"#,
        p = pad,
        t = pad,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">episode</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">avg score (last 100)</text>"#,
        h / 2.0,
        h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        pad - 5.0,
        pad + 4.0,
        y_top
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">0</text>"#,
        pad - 5.0,
        h - pad + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        w - pad,
        h - pad + 16.0,
        max_ep
    );
    for (i, (variant, rs)) in groups.iter().enumerate() {
        let mut per_ep: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for r in rs {
            let e = per_ep.entry(r.episode).or_default();
            e.0 += r.avg100;
            e.1 += 1;
        }
        let pts: Vec<String> = per_ep
            .iter()
            .map(|(&e, &(sum, n))| format!("{:.1},{:.1}", x(e as f64), y(sum / n as f64)))
            .collect();
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = pad + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            w - pad - 120.0,
            w - pad - 100.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{variant}</text>"#, w - pad - 95.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the CSV, summary and plot into `dir`; returns the paths written.
pub fn emit_report(dir: &Path, config: &ExperimentConfig, runs: &[RunMetrics]) -> Result<Vec<PathBuf>> {
    if runs.is_empty() {
        return Err(Error::Empty("runs"));
    }
    fs::create_dir_all(dir)?;
    let csv_text = metrics_csv(config, runs)?;
    let game_max = runs[0].game_max;
    let rows = rows(runs);
    let mut summary = summary_table(&summaries(runs));
    let wall: f64 = runs.iter().map(|r| r.wall_clock.as_secs_f64()).sum();
    let _ = writeln!(
        summary,
        "\ngame max {game_max}; {} runs, {wall:.1} s of run time",
        runs.len()
    );
    let paths = [dir.join(METRICS_FILE), dir.join(SUMMARY_FILE), dir.join(PLOT_FILE)];
    fs::write(&paths[0], csv_text)?;
    fs::write(&paths[1], summary)?;
    fs::write(&paths[2], curves_svg(&rows, game_max))?;
    Ok(paths.to_vec())
}

/// Rebuilds the summary and plot from a directory holding a metrics CSV.
pub fn report_dir(dir: &Path) -> Result<Vec<Summary>> {
    let text = fs::read_to_string(dir.join(METRICS_FILE))?;
    let (rows, game_max) = parse_metrics(&text)?;
    if rows.is_empty() {
        return Err(Error::Empty("metrics rows"));
    }
    let game_max = game_max.ok_or_else(|| Error::Config("metrics CSV lacks the game_max header".into()))?;
    let sums = summaries_from_rows(&rows, game_max);
    fs::write(dir.join(SUMMARY_FILE), summary_table(&sums))?;
    fs::write(dir.join(PLOT_FILE), curves_svg(&rows, game_max))?;
    Ok(sums)
}
