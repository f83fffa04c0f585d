//! Self-contained SVG line charts of result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    BerSnr,
    BerUsers,
    BerFdt,
    NtSnr,
    MiSnr,
    BerPe,
    Complexity,
}

impl PlotKind {
    pub const ALL: [PlotKind; 7] = [
        PlotKind::BerSnr,
        PlotKind::BerUsers,
        PlotKind::BerFdt,
        PlotKind::NtSnr,
        PlotKind::MiSnr,
        PlotKind::BerPe,
        PlotKind::Complexity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::BerSnr => "ber_snr",
            PlotKind::BerUsers => "ber_users",
            PlotKind::BerFdt => "ber_fdt",
            PlotKind::NtSnr => "nt_snr",
            PlotKind::MiSnr => "mi_snr",
            PlotKind::BerPe => "ber_pe",
            PlotKind::Complexity => "complexity",
        }
    }

    pub fn parse(s: &str) -> Result<PlotKind> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown plot kind `{s}`")))
    }

    /// `(x column, y column, log x, log y, x label, y label)`.
    fn axes(self) -> (&'static str, &'static str, bool, bool, &'static str, &'static str) {
        match self {
            PlotKind::BerSnr => ("SNR", "ber", false, true, "SNR (dB)", "BER"),
            PlotKind::BerUsers => ("K", "ber", false, true, "Number of users K", "BER"),
            PlotKind::BerFdt => ("fdT", "ber", true, true, "fdT", "BER"),
            PlotKind::NtSnr => ("SNR", "nt", false, false, "SNR (dB)", "NT (bits/time slot)"),
            PlotKind::MiSnr => ("SNR", "mi", false, false, "SNR (dB)", "Mutual information (bits/Hz)"),
            PlotKind::BerPe => ("p_e", "ber", true, true, "Feedback bit error probability", "BER"),
            PlotKind::Complexity => (
                "n_r",
                "mults",
                false,
                false,
                "Number of relays n_r",
                "Multiplications per symbol",
            ),
        }
    }
}

/// A CSV table held as named string columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Table> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Table { headers, rows })
    }

    pub fn load(path: &Path) -> Result<Table> {
        Table::parse(&std::fs::read_to_string(path)?)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    fn number(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.trim()
            .parse()
            .map_err(|_| Error::Parse(format!("`{cell}` in column `{}` is not a number", self.headers[col])))
    }
}

/// Columns whose differing values split rows into separate series.
const CONTEXT: [&str; 5] = ["K", "n_r", "SNR", "fdT", "p_e"];

type Series = BTreeMap<String, Vec<(f64, f64)>>;

fn collect_series(table: &Table, kind: PlotKind) -> Result<Series> {
    let (xname, yname, logx, logy, ..) = kind.axes();
    let (xc, yc, ac) = (table.column(xname)?, table.column(yname)?, table.column("algorithm")?);
    if table.rows.is_empty() {
        return Err(Error::EmptyGrid("the table has no rows".into()));
    }
    let varying: Vec<(&str, usize)> = CONTEXT
        .iter()
        .filter(|&&c| c != xname)
        .filter_map(|&c| table.column(c).ok().map(|i| (c, i)))
        .filter(|&(_, i)| table.rows.iter().any(|r| r[i] != table.rows[0][i]))
        .collect();
    let mut series = Series::new();
    for (r, row) in table.rows.iter().enumerate() {
        let (x, y) = (table.number(r, xc)?, table.number(r, yc)?);
        if !x.is_finite() || !y.is_finite() || (logx && x <= 0.0) || (logy && y <= 0.0) {
            continue;
        }
        let mut label = row[ac].clone();
        for &(name, i) in &varying {
            let _ = write!(label, " {name}={}", row[i]);
        }
        series.entry(label).or_default().push((x, y));
    }
    if series.is_empty() {
        return Err(Error::EmptyGrid(format!("no plottable `{yname}` values")));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(series)
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    /// `(value, label, is_major)`
    ticks: Vec<(f64, String, bool)>,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64> + Clone, log: bool) -> Axis {
        let min = values.clone().fold(f64::INFINITY, f64::min);
        let max = values.fold(f64::NEG_INFINITY, f64::max);
        if log {
            let mut lo = min.log10().floor() as i32;
            let mut hi = max.log10().ceil() as i32;
            if hi <= lo {
                lo -= 1;
                hi += 1;
            }
            let mut ticks = Vec::new();
            for e in lo..=hi {
                ticks.push((e as f64, format!("1e{e}"), true));
                if e < hi {
                    for m in 2..10 {
                        ticks.push((e as f64 + (m as f64).log10(), String::new(), false));
                    }
                }
            }
            Axis {
                lo: lo as f64,
                hi: hi as f64,
                log: true,
                ticks,
            }
        } else {
            let (mut lo, mut hi) = (min, max);
            if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
                lo -= 1.0;
                hi += 1.0;
            }
            let raw = (hi - lo) / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 2.5, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|s| *s >= raw)
                .unwrap_or(10.0 * mag);
            lo = (lo / step).floor() * step;
            hi = (hi / step).ceil() * step;
            let n = ((hi - lo) / step).round() as usize;
            let ticks = (0..=n)
                .map(|i| {
                    let v = lo + i as f64 * step;
                    (v, format!("{}", (v / step).round() * step), true)
                })
                .collect();
            Axis {
                lo,
                hi,
                log: false,
                ticks,
            }
        }
    }

    fn unit(&self, v: f64) -> f64 {
        let t = if self.log { v.log10() } else { v };
        (t - self.lo) / (self.hi - self.lo)
    }

    fn tick_unit(&self, t: f64) -> f64 {
        (t - self.lo) / (self.hi - self.lo)
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders one chart of `kind` from `table`.
pub fn render_svg(table: &Table, kind: PlotKind, title: &str) -> Result<String> {
    let (_, _, logx, logy, xlabel, ylabel) = kind.axes();
    let series = collect_series(table, kind)?;
    let all = series.values().flatten();
    let xa = Axis::new(all.clone().map(|p| p.0), logx);
    let ya = Axis::new(all.map(|p| p.1), logy);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |v: f64| LEFT + xa.unit(v) * pw;
    let py = |v: f64| TOP + (1.0 - ya.unit(v)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );

    s.push_str("<g class=\"grid\">\n");
    for (t, label, major) in &ya.ticks {
        let y = TOP + (1.0 - ya.tick_unit(*t)) * ph;
        let class = match (ya.log, major) {
            (true, true) => "decade",
            (true, false) => "minor",
            _ => "major",
        };
        let stroke = if *major { "#bbbbbb" } else { "#e6e6e6" };
        let _ = writeln!(
            s,
            r#"<line class="y {class}" x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{stroke}"/>"#,
            LEFT + pw
        );
        if !label.is_empty() {
            let _ = writeln!(
                s,
                r#"<text class="ytick" x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
                LEFT - 6.0,
                y + 4.0
            );
        }
    }
    for (t, label, major) in &xa.ticks {
        let x = LEFT + xa.tick_unit(*t) * pw;
        let class = match (xa.log, major) {
            (true, true) => "decade",
            (true, false) => "minor",
            _ => "major",
        };
        let stroke = if *major { "#bbbbbb" } else { "#e6e6e6" };
        let _ = writeln!(
            s,
            r#"<line class="x {class}" x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="{stroke}"/>"#,
            TOP + ph
        );
        if !label.is_empty() {
            let _ = writeln!(
                s,
                r#"<text class="xtick" x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
                TOP + ph + 18.0
            );
        }
    }
    s.push_str("</g>\n");

    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(ylabel)
    );

    for (n, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[n % COLORS.len()];
        let _ = writeln!(s, r#"<g class="series" data-label="{}">"#, escape(label));
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        for &(x, y) in pts {
            let _ = writeln!(
                s,
                r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        let ly = TOP + 10.0 + 18.0 * n as f64;
        let lx = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.5"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(label)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders `kind` from the CSV at `csv_path` into
/// `<out_dir>/<csv stem>_<kind>.svg`.
pub fn emit_plot(csv_path: &Path, kind: PlotKind, out_dir: &Path) -> Result<PathBuf> {
    let table = Table::load(csv_path)?;
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let svg = render_svg(&table, kind, stem)?;
    std::fs::create_dir_all(out_dir)?;
    let out = out_dir.join(format!("{stem}_{}.svg", kind.name()));
    std::fs::write(&out, svg)?;
    Ok(out)
}
