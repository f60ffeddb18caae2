use anyhow::{bail, Context};
use serde::Serialize;
use wxbs_core::detect::{
    build_pyramid, detect_in_pyramid, orientations_in_pyramid, write_keypoints_csv, OrientationMode,
};
use wxbs_core::geometry::matrix_rows;
use wxbs_core::imgproc::io::{load_gray, to_luma8};
use wxbs_core::viewsynth::{synthesize_view, view_params};
use wxbs_core::{DetectorConfig, ViewParams};

use crate::output::{check_writable, ensure_dir, write_file};
use crate::{load_config, DetectDemoArgs, Outcome, SynthDemoArgs};

#[derive(Serialize)]
struct ViewEntry {
    file: String,
    params: ViewParams,
    /// Original to view coordinates, row-major.
    a: [[f64; 3]; 3],
    width: usize,
    height: usize,
}

pub fn synth(a: &SynthDemoArgs, force: bool) -> anyhow::Result<Outcome> {
    let cfg = load_config(a.config.as_ref())?;
    let n = cfg.schedule.iterations.len();
    if a.iter == 0 || a.iter > n {
        bail!("--iter must be in 1..={n}");
    }
    let img = load_gray(&a.image)?;
    let params = view_params(&cfg.schedule.iterations[a.iter - 1]);
    let names: Vec<String> = (0..params.len()).map(|i| format!("view_{i:03}.png")).collect();
    let mut targets: Vec<_> = names.iter().map(|f| a.out_dir.join(f)).collect();
    targets.push(a.out_dir.join("views.json"));
    check_writable(&targets, force)?;
    ensure_dir(&a.out_dir)?;

    let mut entries = Vec::new();
    for (p, file) in params.into_iter().zip(names) {
        let view = synthesize_view(&img, p);
        let mut png = Vec::new();
        to_luma8(&view.image)
            .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .context("encoding view")?;
        write_file(&a.out_dir.join(&file), &png, force)?;
        entries.push(ViewEntry {
            file,
            params: p,
            a: matrix_rows(&view.a),
            width: view.image.width(),
            height: view.image.height(),
        });
    }
    let mut json = serde_json::to_vec_pretty(&entries)?;
    json.push(b'\n');
    write_file(&a.out_dir.join("views.json"), &json, force)?;
    eprintln!("wrote {} views", entries.len());
    Ok(Outcome::Ok)
}

pub fn detect(a: &DetectDemoArgs, force: bool) -> anyhow::Result<Outcome> {
    check_writable(std::slice::from_ref(&a.out), force)?;
    let img = load_gray(&a.image)?;
    let cfg = DetectorConfig::for_kind(a.detector);
    let pyr = build_pyramid(&img, &cfg)?;
    let det = detect_in_pyramid(&pyr, &cfg, a.detector);
    let mut oriented = Vec::new();
    for k in &det.keypoints {
        for o in orientations_in_pyramid(&pyr, k, OrientationMode::Full) {
            oriented.push((*k, o));
        }
    }
    let mut buf = Vec::new();
    write_keypoints_csv(&mut buf, &oriented)?;
    write_file(&a.out, &buf, force)?;
    eprintln!("{} keypoints, {} oriented frames, threshold {:.3e}", det.keypoints.len(), oriented.len(), det.threshold);
    Ok(Outcome::Ok)
}
