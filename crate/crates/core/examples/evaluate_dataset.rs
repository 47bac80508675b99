//! Synthesizes a small dataset on disk, reads it back, and scores the
//! ground-truth clouds with the evaluation harness.
//!
//! cargo run --release --example evaluate_dataset -- [out_dir]

use std::path::PathBuf;

use wonderland::pipeline::{
    evaluate, generate_scene, read_dataset, scene_dir, write_report, write_scene, Complexity, EvalOptions, Protocol, SceneSpec,
};

fn main() -> wonderland::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "evaluate_dataset_out".into()));
    let spec = SceneSpec { frames: 17, height: 48, width: 72 };
    for i in 0..3 {
        write_scene(&scene_dir(&out, i), &generate_scene(40 + i as u64, Complexity::Small, &spec)?)?;
    }
    let scenes = read_dataset(&out)?;
    let report = evaluate(&scenes, Protocol::GroundTruth, &EvalOptions::default())?;
    write_report(&out.join("report.json"), &report)?;
    println!("{}", report.to_json());
    Ok(())
}
