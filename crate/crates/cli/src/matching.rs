use anyhow::Context;
use wxbs_core::imgproc::io::load_gray;
use wxbs_core::matching::write_correspondences_csv;
use wxbs_core::match_pair;

use crate::output::{check_writable, ensure_dir, write_file};
use crate::{load_config, viz, MatchArgs, Outcome};

pub fn run(a: &MatchArgs, force: bool) -> anyhow::Result<Outcome> {
    let mut cfg = load_config(a.cfg.config.as_ref())?;
    cfg.ransac.seed = a.cfg.seed;
    if let Some(m) = a.model {
        cfg.want_model = m.into();
    }
    cfg.validate()?;
    let img1 = load_gray(&a.img1)?;
    let img2 = load_gray(&a.img2)?;

    let report_path = a.out.join("report.json");
    let csv_path = a.out.join("correspondences.csv");
    let viz_path = a.out.join("matches.png");
    let mut targets = vec![report_path.clone(), csv_path.clone()];
    if a.viz {
        targets.push(viz_path.clone());
    }
    check_writable(&targets, force)?;
    ensure_dir(&a.out)?;

    let report = match_pair(&img1, &img2, &cfg)?;
    for it in &report.per_iteration {
        eprintln!(
            "iteration {}: views {:?}, features {:?}, {} tentative, {} verified, {:.2}s",
            it.iteration,
            it.view_counts,
            it.feature_counts,
            it.tc_count,
            it.inlier_count,
            it.elapsed.as_secs_f64()
        );
    }

    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    write_file(&report_path, &json, force)?;
    let mut csv = Vec::new();
    write_correspondences_csv(&mut csv, &report.correspondences)?;
    write_file(&csv_path, &csv, force)?;
    if a.viz {
        let canvas = viz::side_by_side(&img1, &img2, &report.correspondences);
        let mut png = Vec::new();
        canvas
            .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .context("encoding visualization")?;
        write_file(&viz_path, &png, force)?;
    }

    if report.succeeded {
        eprintln!("matched: {} correspondences", report.correspondences.len());
        Ok(Outcome::Ok)
    } else {
        eprintln!("matching failed: {} correspondences, need {}", report.correspondences.len(), cfg.theta_m);
        Ok(Outcome::MatchFailed)
    }
}
