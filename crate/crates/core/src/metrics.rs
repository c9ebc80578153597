//! ROC, AUC, EER threshold and HTER threshold transfer.
//!
//! Live is the positive class; an item is accepted as live when its score is
//! `>= threshold`. FAR is the fraction of spoofs accepted, FRR the fraction
//! of lives rejected.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor_io::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    items: Vec<(f64, Label)>,
    live: usize,
    spoof: usize,
}

impl ScoreSet {
    /// Requires finite scores, live/spoof labels only, and both classes.
    pub fn new(items: Vec<(f64, Label)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Empty("score set".into()));
        }
        if let Some((s, _)) = items.iter().find(|(s, _)| !s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite score {s}")));
        }
        if items.iter().any(|(_, l)| *l == Label::Unlabeled) {
            return Err(Error::InvalidParameter("score set items must be live or spoof".into()));
        }
        let live = items.iter().filter(|(_, l)| *l == Label::Live).count();
        let spoof = items.len() - live;
        if live == 0 || spoof == 0 {
            return Err(Error::SingleClass);
        }
        Ok(ScoreSet { items, live, spoof })
    }

    pub fn from_classes(live: &[f64], spoof: &[f64]) -> Result<Self> {
        ScoreSet::new(
            live.iter()
                .map(|&s| (s, Label::Live))
                .chain(spoof.iter().map(|&s| (s, Label::Spoof)))
                .collect(),
        )
    }

    pub fn items(&self) -> &[(f64, Label)] {
        &self.items
    }

    pub fn num_live(&self) -> usize {
        self.live
    }

    pub fn num_spoof(&self) -> usize {
        self.spoof
    }

    /// `(FAR, FRR)` at `threshold`.
    pub fn error_rates(&self, threshold: f64) -> (f64, f64) {
        let accepted_spoof = self
            .items
            .iter()
            .filter(|(s, l)| *l == Label::Spoof && *s >= threshold)
            .count();
        let rejected_live = self
            .items
            .iter()
            .filter(|(s, l)| *l == Label::Live && *s < threshold)
            .count();
        (
            accepted_spoof as f64 / self.spoof as f64,
            rejected_live as f64 / self.live as f64,
        )
    }

    /// Distinct scores ascending, with (live, spoof) counts per score.
    fn tie_groups(&self) -> Vec<(f64, usize, usize)> {
        let mut sorted = self.items.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut groups: Vec<(f64, usize, usize)> = Vec::new();
        for (s, l) in sorted {
            match groups.last_mut() {
                Some(g) if g.0 == s => {}
                _ => groups.push((s, 0, 0)),
            }
            let g = groups.last_mut().unwrap();
            if l == Label::Live {
                g.1 += 1;
            } else {
                g.2 += 1;
            }
        }
        groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Items scoring `>= threshold` are accepted; the first point uses `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// One point per distinct score, thresholds descending, from (0,0) to (1,1).
pub fn roc_curve(scores: &ScoreSet) -> RocCurve {
    let (nl, ns) = (scores.live as f64, scores.spoof as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (s, live, spoof) in scores.tie_groups().into_iter().rev() {
        tp += live;
        fp += spoof;
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / ns,
            tpr: tp as f64 / nl,
        });
    }
    RocCurve { points }
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerPoint {
    pub threshold: f64,
    pub eer: f64,
    pub far: f64,
    pub frr: f64,
}

/// Threshold where FAR and FRR cross.
///
/// Candidates are the midpoints between adjacent distinct scores, plus the
/// lowest score (accept all) and one above the highest (reject all). The
/// candidate with the smallest `|FAR - FRR|` wins; ties go to the smaller
/// `(FAR + FRR) / 2`, then the lower threshold. The reported EER is
/// `(FAR + FRR) / 2` at the chosen threshold.
pub fn eer_threshold(scores: &ScoreSet) -> EerPoint {
    let groups = scores.tie_groups();
    let (nl, ns) = (scores.live as f64, scores.spoof as f64);
    let lowest = groups[0].0;
    let highest = groups[groups.len() - 1].0;

    // Accept-all start: FAR = 1, FRR = 0.
    let mut candidates = vec![(lowest, 1.0, 0.0)];
    let mut rejected_live = 0usize;
    let mut accepted_spoof = scores.spoof;
    for pair in groups.windows(2) {
        rejected_live += pair[0].1;
        accepted_spoof -= pair[0].2;
        candidates.push((
            pair[0].0 + (pair[1].0 - pair[0].0) / 2.0,
            accepted_spoof as f64 / ns,
            rejected_live as f64 / nl,
        ));
    }
    let above = if highest.abs() < 1.0 { highest + 1.0 } else { highest + highest.abs() };
    candidates.push((above, 0.0, 1.0));

    let key = |c: &(f64, f64, f64)| ((c.1 - c.2).abs(), (c.1 + c.2) / 2.0, c.0);
    let best = candidates
        .into_iter()
        .min_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
        })
        .expect("at least two candidates");
    EerPoint {
        threshold: best.0,
        eer: (best.1 + best.2) / 2.0,
        far: best.1,
        frr: best.2,
    }
}

pub fn hter(scores: &ScoreSet, threshold: f64) -> f64 {
    let (far, frr) = scores.error_rates(threshold);
    (far + frr) / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub source_eer: f64,
    pub threshold: f64,
    pub target_far: f64,
    pub target_frr: f64,
    pub target_hter: f64,
    pub target_auc: f64,
    pub target_roc: RocCurve,
}

impl EvalReport {
    /// Flat `key=value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "eer={}\nthreshold={}\nhter={}\nauc={}\nfar={}\nfrr={}\n",
            self.source_eer, self.threshold, self.target_hter, self.target_auc, self.target_far, self.target_frr
        )
    }
}

/// Calibrates the EER threshold on `source` and applies it to `target`.
pub fn evaluate_transfer(source: &ScoreSet, target: &ScoreSet) -> EvalReport {
    let eer = eer_threshold(source);
    let (far, frr) = target.error_rates(eer.threshold);
    let target_roc = roc_curve(target);
    EvalReport {
        source_eer: eer.eer,
        threshold: eer.threshold,
        target_far: far,
        target_frr: frr,
        target_hter: (far + frr) / 2.0,
        target_auc: auc(&target_roc),
        target_roc,
    }
}

pub fn roc_to_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr).unwrap();
    }
    out
}

/// A standalone SVG plot of the curve with the chance diagonal.
pub fn roc_to_svg(curve: &RocCurve, title: &str) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    let x = |fpr: f64| PAD + fpr * SIZE;
    let y = |tpr: f64| PAD + (1.0 - tpr) * SIZE;
    let polyline: Vec<String> = curve
        .points
        .iter()
        .map(|p| format!("{:.3},{:.3}", x(p.fpr), y(p.tpr)))
        .collect();
    let escaped = title.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    let total = SIZE + 2.0 * PAD;
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{t}\" height=\"{t}\" viewBox=\"0 0 {t} {t}\">\n",
            "<rect x=\"{p}\" y=\"{p}\" width=\"{s}\" height=\"{s}\" fill=\"none\" stroke=\"black\"/>\n",
            "<line x1=\"{p}\" y1=\"{e}\" x2=\"{e}\" y2=\"{p}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n",
            "<polyline fill=\"none\" stroke=\"blue\" stroke-width=\"2\" points=\"{pts}\"/>\n",
            "<text x=\"{p}\" y=\"{ty}\" font-size=\"14\">{title}</text>\n",
            "<text x=\"{cx}\" y=\"{by}\" font-size=\"12\" text-anchor=\"middle\">FPR</text>\n",
            "<text x=\"12\" y=\"{cx}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 {cx})\">TPR</text>\n",
            "</svg>\n"
        ),
        t = total,
        p = PAD,
        s = SIZE,
        e = PAD + SIZE,
        pts = polyline.join(" "),
        ty = PAD - 12.0,
        title = escaped,
        cx = PAD + SIZE / 2.0,
        by = total - 8.0,
    )
}

/// Parses CSV with a header naming `score` and `label` columns (others are
/// ignored). Labels are `live` or `spoof`.
pub fn parse_scores_csv(text: &str) -> Result<ScoreSet> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Empty("scores CSV has no header".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::InvalidParameter(format!("scores CSV header lacks a {name:?} column")))
    };
    let (score_col, label_col) = (col("score")?, col("label")?);
    let mut items = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |msg: String| Error::InvalidParameter(format!("scores CSV row {}: {msg}", i + 2));
        let score: f64 = fields
            .get(score_col)
            .ok_or_else(|| bad("missing score".into()))?
            .parse()
            .map_err(|e| bad(format!("{e}")))?;
        let label: Label = fields
            .get(label_col)
            .ok_or_else(|| bad("missing label".into()))?
            .parse()
            .map_err(bad)?;
        items.push((score, label));
    }
    ScoreSet::new(items)
}

pub fn scores_to_csv<'a>(rows: impl IntoIterator<Item = (&'a str, f64, Label)>) -> String {
    let mut out = String::from("id,score,label\n");
    for (id, score, label) in rows {
        writeln!(out, "{id},{score},{label}").unwrap();
    }
    out
}
