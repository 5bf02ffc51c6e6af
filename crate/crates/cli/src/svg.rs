//! Small hand-written SVG figures. Output depends only on the input values.

use std::fmt::Write as _;

use somnoscore::metrics::MetricsReport;
use somnoscore::sigdata::SleepStage;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;

pub struct LossPoint {
    pub iteration: usize,
    pub train: f64,
    pub val: f64,
}

fn open(s: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn text(s: &mut String, x: f64, y: f64, anchor: &str, body: &str) {
    let _ = writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{body}</text>"#);
}

fn axes(s: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        s,
        r#"<path d="M{m:.1} {t:.1} V{b:.1} H{r:.1}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN / 2.0,
        b = h - MARGIN,
        r = w - MARGIN / 2.0
    );
}

pub fn loss_curve(points: &[LossPoint]) -> String {
    let mut s = String::new();
    open(&mut s, WIDTH, HEIGHT);
    axes(&mut s, WIDTH, HEIGHT);
    let finite = points.iter().flat_map(|p| [p.train, p.val]).filter(|v| v.is_finite());
    let top = finite.fold(0.0f64, f64::max).max(1e-12);
    let last = points.iter().map(|p| p.iteration).max().unwrap_or(1).max(1) as f64;
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 1.5 * MARGIN;
    let x = |it: usize| MARGIN + plot_w * it as f64 / last;
    let y = |v: f64| HEIGHT - MARGIN - plot_h * (v / top).clamp(0.0, 1.0);
    for (series, colour, pick) in [
        ("train", "#1f77b4", (|p: &LossPoint| p.train) as fn(&LossPoint) -> f64),
        ("val", "#d62728", |p: &LossPoint| p.val),
    ] {
        let mut d = String::new();
        for (i, p) in points.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.1} {:.1} ",
                if i == 0 { "M" } else { "L" },
                x(p.iteration),
                y(pick(p))
            );
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" stroke="{colour}" fill="none" stroke-width="1.5"><title>{series}</title></path>"#,
            d.trim_end()
        );
    }
    text(&mut s, WIDTH / 2.0, HEIGHT - 12.0, "middle", "iteration");
    text(&mut s, MARGIN - 4.0, MARGIN / 2.0 + 4.0, "end", &format!("{top:.3}"));
    text(&mut s, MARGIN - 4.0, HEIGHT - MARGIN, "end", "0");
    text(
        &mut s,
        WIDTH - MARGIN,
        MARGIN / 2.0 + 12.0,
        "end",
        "train (blue), val (red)",
    );
    s.push_str("</svg>\n");
    s
}

pub fn class_bars(report: &MetricsReport) -> String {
    let mut s = String::new();
    open(&mut s, WIDTH, HEIGHT);
    axes(&mut s, WIDTH, HEIGHT);
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 1.5 * MARGIN;
    let group = plot_w / report.per_class.len().max(1) as f64;
    let bar = group / 4.0;
    for (i, scores) in report.per_class.iter().enumerate() {
        let x0 = MARGIN + group * i as f64 + bar / 2.0;
        for (j, (value, colour)) in [
            (scores.precision, "#1f77b4"),
            (scores.recall, "#ff7f0e"),
            (scores.f1, "#2ca02c"),
        ]
        .into_iter()
        .enumerate()
        {
            let h = plot_h * value.clamp(0.0, 1.0);
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{bar:.1}" height="{h:.1}" fill="{colour}"/>"#,
                x0 + bar * j as f64,
                HEIGHT - MARGIN - h
            );
        }
        text(
            &mut s,
            x0 + 1.5 * bar,
            HEIGHT - MARGIN + 14.0,
            "middle",
            &report.classes[i],
        );
    }
    text(&mut s, MARGIN - 4.0, MARGIN / 2.0 + 4.0, "end", "1");
    text(&mut s, MARGIN - 4.0, HEIGHT - MARGIN, "end", "0");
    text(
        &mut s,
        WIDTH - MARGIN,
        MARGIN / 2.0 + 12.0,
        "end",
        &format!("precision, recall, F1; macro F1 {:.3}", report.f1_macro),
    );
    s.push_str("</svg>\n");
    s
}

fn stage_row(stage: SleepStage) -> usize {
    match stage {
        SleepStage::Awake => 0,
        SleepStage::Rem => 1,
        SleepStage::N1 => 2,
        SleepStage::N2 => 3,
        SleepStage::N3 => 4,
    }
}

/// Truth on top, prediction below; excluded epochs leave a gap.
pub fn hypnogram_strip(patient: &str, truth: &[Option<SleepStage>], predicted: &[SleepStage]) -> String {
    let mut s = String::new();
    let panel = (HEIGHT - 1.5 * MARGIN) / 2.0;
    open(&mut s, WIDTH, HEIGHT);
    let n = truth.len().max(1) as f64;
    let step = (WIDTH - 1.5 * MARGIN) / n;
    let level = panel / 5.0;
    for (k, (label, row)) in [("truth", 0usize), ("predicted", 1)].into_iter().enumerate() {
        let top = MARGIN / 2.0 + row as f64 * (panel + MARGIN / 2.0);
        text(&mut s, MARGIN - 4.0, top + 10.0, "end", label);
        let mut d = String::new();
        let mut pen_up = true;
        for (e, t) in truth.iter().enumerate() {
            let stage = if k == 0 { *t } else { predicted.get(e).copied() };
            match stage {
                Some(st) => {
                    let y = top + level * (stage_row(st) as f64 + 0.5);
                    let x = MARGIN + step * e as f64;
                    let _ = write!(d, "{}{x:.1} {y:.1} H{:.1} ", if pen_up { "M" } else { "L" }, x + step);
                    pen_up = false;
                }
                None => pen_up = true,
            }
        }
        let _ = writeln!(s, r#"<path d="{}" stroke="black" fill="none"/>"#, d.trim_end());
        for st in SleepStage::ALL {
            let y = top + level * (stage_row(st) as f64 + 0.5) + 4.0;
            text(&mut s, WIDTH - MARGIN / 2.0 + 2.0, y, "start", st.token());
        }
    }
    text(
        &mut s,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        "middle",
        &format!("{patient}, 30 s epochs"),
    );
    s.push_str("</svg>\n");
    s
}
