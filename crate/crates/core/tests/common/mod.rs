#![allow(dead_code)]

use std::path::Path;

use clap::Parser;
use nalgebra::UnitQuaternion;
use wonderland::camera::random_rotation;
use wonderland::cli::{run, Cli};
use wonderland::gsplat::GaussianCloud;
use wonderland::numerics::Rng;

pub fn random_cloud(rng: &mut Rng, n: usize) -> GaussianCloud {
    let mut c = GaussianCloud::default();
    for _ in 0..n {
        let q = UnitQuaternion::from_matrix(&random_rotation(rng));
        c.push(
            [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(2.0, 4.0)],
            [rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)],
            [q.w as f32, q.i as f32, q.j as f32, q.k as f32],
            [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)],
            rng.uniform(0.3, 0.9),
        );
    }
    c
}

/// Runs `wonderland <args>` in-process.
pub fn cli(args: &[&str]) -> wonderland::Result<i32> {
    let cli = Cli::try_parse_from(std::iter::once("wonderland").chain(args.iter().copied()))
        .map_err(|e| wonderland::Error::Contract(e.to_string()))?;
    run(cli)
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// `(step, loss)` rows of a training loss CSV.
pub fn read_losses(p: &Path) -> Vec<(usize, f64)> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().parse().unwrap(), f.next().unwrap().parse().unwrap())
        })
        .collect()
}
