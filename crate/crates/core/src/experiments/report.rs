use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::runner::RunRecord;
use crate::error::{contract, Result};
use crate::scoring::{aggregate_runs, AggregateResult};
use crate::training::Variation;

const MISSING: &str = "—";
const COLORS: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

/// Regime rows in descending kept order: (kept, extra, one aggregate per
/// variation in table column order).
type Rows = Vec<(usize, usize, [Option<AggregateResult>; 4])>;

fn aggregate(records: &[RunRecord]) -> Result<Rows> {
    if records.is_empty() {
        return contract("no run records to aggregate");
    }
    let mut cells: BTreeMap<std::cmp::Reverse<usize>, (usize, [Vec<f64>; 4])> = BTreeMap::new();
    for r in records {
        let entry = cells.entry(std::cmp::Reverse(r.kept)).or_insert_with(|| (r.extra, Default::default()));
        entry.0 = entry.0.max(r.extra);
        let col = Variation::ALL.iter().position(|&v| v == r.variation).expect("listed");
        entry.1[col].push(r.test_f1);
    }
    cells
        .into_iter()
        .map(|(kept, (extra, cols))| {
            let mut aggs: [Option<AggregateResult>; 4] = Default::default();
            for (slot, values) in aggs.iter_mut().zip(&cols) {
                if !values.is_empty() {
                    *slot = Some(aggregate_runs(values)?);
                }
            }
            Ok((kept.0, extra, aggs))
        })
        .collect()
}

/// Appendix-style table of test F1 as `mean ± std`, one row per regime.
/// Sets with extra data get an extra-count column.
pub fn emit_table(records: &[RunRecord]) -> Result<String> {
    let rows = aggregate(records)?;
    let with_extra = records.iter().any(|r| r.set.uses_extra());
    let mut out = String::from("kept");
    if with_extra {
        out.push_str("\textra");
    }
    for v in Variation::ALL {
        write!(out, "\t{}", v.label()).expect("string write");
    }
    out.push('\n');
    for (kept, extra, aggs) in rows {
        write!(out, "{kept}").expect("string write");
        if with_extra {
            write!(out, "\t{extra}").expect("string write");
        }
        for a in &aggs {
            match a {
                Some(a) => write!(out, "\t{a}").expect("string write"),
                None => write!(out, "\t{MISSING}").expect("string write"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Grouped bar chart of mean test F1 per regime with standard-deviation
/// whiskers, as a standalone SVG document.
pub fn render_chart(records: &[RunRecord]) -> Result<String> {
    let rows = aggregate(records)?;
    let (bar, group_gap, left, top, plot_h, bottom) = (18.0, 28.0, 64.0, 40.0, 280.0, 56.0);
    let group_w = bar * 4.0;
    let plot_w = rows.len() as f64 * (group_w + group_gap) + group_gap;
    let (width, height) = (left + plot_w + 150.0, top + plot_h + bottom);
    let peak = rows
        .iter()
        .flat_map(|r| r.2.iter().flatten())
        .map(|a| a.mean + a.std)
        .fold(0.0f64, f64::max);
    let y_max = ((peak / 10.0).ceil() * 10.0).clamp(10.0, 100.0);
    let y = |v: f64| top + plot_h - plot_h * (v.clamp(0.0, y_max) / y_max);

    let mut s = String::new();
    let w = &mut s;
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for k in 0..=5 {
        let v = y_max * k as f64 / 5.0;
        let yy = y(v);
        writeln!(
            w,
            r##"<line x1="{left:.1}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#dddddd"/>"##,
            left + plot_w
        )
        .unwrap();
        writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.0}</text>"#, left - 6.0, yy + 4.0).unwrap();
    }
    writeln!(
        w,
        r#"<line x1="{left:.1}" y1="{top:.1}" x2="{left:.1}" y2="{:.1}" stroke="black"/>"#,
        top + plot_h
    )
    .unwrap();
    writeln!(
        w,
        r#"<line x1="{left:.1}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="black"/>"#,
        top + plot_h,
        left + plot_w
    )
    .unwrap();
    for (g, (kept, _, aggs)) in rows.iter().enumerate() {
        let x0 = left + group_gap + g as f64 * (group_w + group_gap);
        for (i, a) in aggs.iter().enumerate() {
            let Some(a) = a else { continue };
            let x = x0 + i as f64 * bar;
            let (y_top, y_base) = (y(a.mean), y(0.0));
            writeln!(
                w,
                r#"<rect x="{x:.1}" y="{y_top:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                bar - 2.0,
                y_base - y_top,
                COLORS[i]
            )
            .unwrap();
            if a.std > 0.0 {
                let cx = x + (bar - 2.0) / 2.0;
                let (hi, lo) = (y(a.mean + a.std), y(a.mean - a.std));
                writeln!(w, r#"<line x1="{cx:.1}" y1="{lo:.1}" x2="{cx:.1}" y2="{hi:.1}" stroke="black"/>"#).unwrap();
                for yy in [lo, hi] {
                    writeln!(
                        w,
                        r#"<line x1="{:.1}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="black"/>"#,
                        cx - 3.0,
                        cx + 3.0
                    )
                    .unwrap();
                }
            }
        }
        writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{kept}</text>"#,
            x0 + group_w / 2.0,
            top + plot_h + 16.0
        )
        .unwrap();
    }
    writeln!(
        w,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">token-annotated documents</text>"#,
        left + plot_w / 2.0,
        top + plot_h + 40.0
    )
    .unwrap();
    writeln!(
        w,
        r#"<text x="16" y="{0:.1}" text-anchor="middle" transform="rotate(-90 16 {0:.1})">test F1</text>"#,
        top + plot_h / 2.0
    )
    .unwrap();
    for (i, v) in Variation::ALL.iter().enumerate() {
        let (lx, ly) = (left + plot_w + 20.0, top + 10.0 + 20.0 * i as f64);
        writeln!(w, r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#, ly - 10.0, COLORS[i]).unwrap();
        writeln!(w, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 18.0, v.label()).unwrap();
    }
    writeln!(w, "</svg>").unwrap();
    Ok(s)
}

pub fn emit_chart(records: &[RunRecord], path: &Path) -> Result<()> {
    std::fs::write(path, render_chart(records)?)?;
    Ok(())
}
