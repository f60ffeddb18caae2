use std::collections::{BTreeMap, BTreeSet};

use anyhow::bail;
use serde::Serialize;
use wxbs_core::detect::{build_pyramid, detect_in_pyramid, keypoint_to_laf, orientations_in_pyramid, OrientationMode};
use wxbs_core::eval::{
    category_recall, complementarity_pairs, default_ratio_grid, default_thresholds, desc_eval_prepare,
    desc_precision_recall, ground_truth_points, load_manifest, pair_recall, svg_line_plot, write_pr_csv,
    write_recall_csv, GroundTruthPair, PlotSeries, PrCurve, RecallCurve,
};
use wxbs_core::imgproc::io::load_gray;
use wxbs_core::{match_pair, DetectorConfig, DetectorKind, Laf, ModelKind, WantModel};

use crate::output::{check_writable, ensure_dir, sanitize, write_file};
use crate::{load_config, EvalDescArgs, EvalMatcherArgs, Outcome};

fn load_pairs(path: &std::path::Path) -> anyhow::Result<Vec<GroundTruthPair>> {
    let pairs = load_manifest(path)?;
    if pairs.is_empty() {
        bail!("{}: manifest lists no pairs", path.display());
    }
    Ok(pairs)
}

#[derive(Serialize)]
struct PairSummary<'a> {
    id: &'a str,
    category: &'a str,
    kind: ModelKind,
    succeeded: bool,
    inliers: usize,
    ground_truth_points: usize,
    error: Option<String>,
}

fn recall_plot(title: &str, curves: &[(String, RecallCurve)]) -> String {
    let series: Vec<PlotSeries> = curves
        .iter()
        .map(|(name, c)| PlotSeries {
            name: name.clone(),
            points: c.thresholds.iter().copied().zip(c.recall.iter().copied()).collect(),
        })
        .collect();
    let x_max = curves.first().and_then(|(_, c)| c.thresholds.last().copied()).unwrap_or(1.0);
    svg_line_plot(title, "threshold [px]", "recall", x_max, 1.0, &series)
}

pub fn run_matcher(a: &EvalMatcherArgs, force: bool) -> anyhow::Result<Outcome> {
    let pairs = load_pairs(&a.manifest)?;
    let mut base = load_config(a.cfg.config.as_ref())?;
    base.ransac.seed = a.cfg.seed;
    let thresholds = default_thresholds();

    let categories: BTreeSet<&str> = pairs.iter().map(|p| p.category.as_str()).collect();
    let mut targets = vec![a.out_dir.join("pairs.csv"), a.out_dir.join("categories.csv"), a.out_dir.join("summary.json")];
    targets.extend(categories.iter().map(|c| a.out_dir.join(format!("recall_{}.svg", sanitize(c)))));
    check_writable(&targets, force)?;
    ensure_dir(&a.out_dir)?;

    let mut per_pair: Vec<(String, RecallCurve)> = Vec::new();
    let mut by_category: BTreeMap<&str, Vec<(String, RecallCurve)>> = BTreeMap::new();
    let mut summaries = Vec::new();
    for p in &pairs {
        let img1 = load_gray(&p.images[0])?;
        let img2 = load_gray(&p.images[1])?;
        let points = ground_truth_points(p, (img1.width(), img1.height()), (img2.width(), img2.height()));
        let mut cfg = base.clone();
        cfg.want_model = match p.kind {
            ModelKind::Fund => WantModel::Fund,
            ModelKind::Hom => WantModel::Hom,
        };
        let (curve, succeeded, inliers, error) = match match_pair(&img1, &img2, &cfg) {
            Ok(report) => match &report.model {
                Some(m) if m.kind() == p.kind => {
                    (pair_recall(&points, p.kind, m, &thresholds)?, report.succeeded, report.correspondences.len(), None)
                }
                _ => (RecallCurve::zero(&thresholds), false, 0, Some("no model".to_string())),
            },
            Err(e) => (RecallCurve::zero(&thresholds), false, 0, Some(e.to_string())),
        };
        eprintln!("{}: succeeded={succeeded} inliers={inliers}", p.id);
        summaries.push(PairSummary {
            id: &p.id,
            category: &p.category,
            kind: p.kind,
            succeeded,
            inliers,
            ground_truth_points: points.len(),
            error,
        });
        per_pair.push((p.id.clone(), curve.clone()));
        by_category.entry(p.category.as_str()).or_default().push((p.id.clone(), curve));
    }

    let mut cat_curves = Vec::new();
    for (cat, curves) in &by_category {
        let only: Vec<RecallCurve> = curves.iter().map(|(_, c)| c.clone()).collect();
        let mean = category_recall(&only)?;
        let mut plotted = vec![(format!("{cat} (mean)"), mean.clone())];
        plotted.extend(curves.iter().cloned());
        let svg = recall_plot(&format!("Recall: {cat}"), &plotted);
        write_file(&a.out_dir.join(format!("recall_{}.svg", sanitize(cat))), svg.as_bytes(), force)?;
        cat_curves.push((cat.to_string(), mean));
    }

    let mut buf = Vec::new();
    write_recall_csv(&mut buf, &per_pair)?;
    write_file(&a.out_dir.join("pairs.csv"), &buf, force)?;
    let mut buf = Vec::new();
    write_recall_csv(&mut buf, &cat_curves)?;
    write_file(&a.out_dir.join("categories.csv"), &buf, force)?;
    let mut json = serde_json::to_vec_pretty(&summaries)?;
    json.push(b'\n');
    write_file(&a.out_dir.join("summary.json"), &json, force)?;
    Ok(Outcome::Ok)
}

fn detect_lafs(img: &wxbs_core::GrayImage, max_features: usize) -> anyhow::Result<Vec<Laf>> {
    let cfg = DetectorConfig { max_features: Some(max_features), ..DetectorConfig::dog() };
    let pyr = build_pyramid(img, &cfg)?;
    let det = detect_in_pyramid(&pyr, &cfg, DetectorKind::Dog);
    let mut lafs = Vec::new();
    for k in &det.keypoints {
        for o in orientations_in_pyramid(&pyr, k, OrientationMode::Full) {
            lafs.push(keypoint_to_laf(k, o));
        }
    }
    Ok(lafs)
}

#[derive(Serialize)]
struct MapRow<'a> {
    pair: &'a str,
    descriptor: String,
    pairs: usize,
    map: f64,
}

#[derive(Serialize)]
struct ComplementarityRow<'a> {
    pair: &'a str,
    first: String,
    second: String,
    union: usize,
}

pub fn run_desc(a: &EvalDescArgs, force: bool) -> anyhow::Result<Outcome> {
    if a.desc.is_empty() {
        bail!("--desc lists no descriptor kinds");
    }
    let pairs = load_pairs(&a.manifest)?;
    let usable: Vec<&GroundTruthPair> = pairs.iter().filter(|p| p.homography().is_some()).collect();
    if usable.is_empty() {
        bail!("{}: no homography pairs to evaluate descriptors on", a.manifest.display());
    }
    for p in pairs.iter().filter(|p| p.homography().is_none()) {
        eprintln!("{}: skipped, descriptor evaluation needs a homography", p.id);
    }
    let mut targets =
        vec![a.out_dir.join("pr.csv"), a.out_dir.join("map.csv"), a.out_dir.join("complementarity.csv")];
    targets.extend(usable.iter().map(|p| a.out_dir.join(format!("pr_{}.svg", sanitize(&p.id)))));
    check_writable(&targets, force)?;
    ensure_dir(&a.out_dir)?;

    let grid = default_ratio_grid();
    let mut pr_rows: Vec<(String, PrCurve)> = Vec::new();
    let mut map_rows = Vec::new();
    let mut comp_rows = Vec::new();
    for p in &usable {
        let h = p.homography().expect("filtered to homography pairs");
        let img1 = load_gray(&p.images[0])?;
        let img2 = load_gray(&p.images[1])?;
        let lafs = detect_lafs(&img1, a.max_features)?;
        let gt = desc_eval_prepare(h, &lafs, (img2.width(), img2.height()));
        let mut sets = BTreeMap::new();
        let mut series = Vec::new();
        for &kind in &a.desc {
            let (curve, described) = desc_precision_recall(&gt, (&img1, &img2), kind, &grid)?;
            eprintln!("{} {kind}: {} pairs, mAP {:.4}", p.id, described.kept.len(), curve.map);
            map_rows.push(MapRow { pair: &p.id, descriptor: kind.to_string(), pairs: described.kept.len(), map: curve.map });
            let set: BTreeSet<usize> = curve.correct_set(a.ratio).into_iter().map(|i| described.kept[i]).collect();
            sets.insert(kind.to_string(), set);
            let mut pts: Vec<(f64, f64)> =
                curve.points.iter().filter(|q| q.accepted > 0).map(|q| (q.recall, q.precision)).collect();
            pts.sort_by(|x, y| x.0.total_cmp(&y.0));
            series.push(PlotSeries { name: format!("{kind} ({:.3})", curve.map), points: pts });
            pr_rows.push((format!("{}/{kind}", p.id), curve));
        }
        let svg = svg_line_plot(&format!("Precision-recall: {}", p.id), "recall", "precision", 1.0, 1.0, &series);
        write_file(&a.out_dir.join(format!("pr_{}.svg", sanitize(&p.id))), svg.as_bytes(), force)?;
        for c in complementarity_pairs(&sets) {
            comp_rows.push(ComplementarityRow { pair: &p.id, first: c.first, second: c.second, union: c.union });
        }
    }

    let mut buf = Vec::new();
    write_pr_csv(&mut buf, &pr_rows)?;
    write_file(&a.out_dir.join("pr.csv"), &buf, force)?;
    write_file(&a.out_dir.join("map.csv"), &serialize_csv(&map_rows)?, force)?;
    write_file(&a.out_dir.join("complementarity.csv"), &serialize_csv(&comp_rows)?, force)?;
    Ok(Outcome::Ok)
}

fn serialize_csv<T: Serialize>(rows: &[T]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}
