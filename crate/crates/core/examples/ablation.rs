//! Prints mean IoU and boundary-band metrics for each GD mode on a preset.
//!
//! `cargo run --release --example ablation -- two_boxes_touching 5`

use splatseg::provider::OracleTarget;
use splatseg::seg::{segment, GdMode, PromptInput, SegParams};
use splatseg::synth::{evaluate_run, evaluate_subset, gen_scene, preset, DEFAULT_BAND};

fn main() -> splatseg::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map_or("two_boxes_touching", String::as_str);
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let config = preset(name)?;

    let mut ceiling = 0.0;
    for seed in 0..seeds {
        let scene = gen_scene(&config, seed)?;
        let subset = scene.object_indices(1);
        ceiling += evaluate_subset(&scene, &scene.cloud, &subset, 1, DEFAULT_BAND)?
            .mean
            .iou;
    }
    println!("generator labels: iou {:.4}", ceiling / seeds as f64);

    for gd in [GdMode::On, GdMode::Off, GdMode::Delete] {
        let (mut iou, mut biou, mut bf1, mut splits) = (0.0, 0.0, 0.0, 0);
        for seed in 0..seeds {
            let scene = gen_scene(&config, seed)?;
            let points = [scene.default_prompt(1)?];
            let provider = scene.oracle(OracleTarget::FromPrompts);
            let params = SegParams {
                gd,
                ..Default::default()
            };
            let out = segment(
                &scene.cloud,
                &scene.cameras,
                &provider,
                Some(PromptInput {
                    view0: 0,
                    points: &points,
                }),
                &params,
                &mut |_| {},
            )?;
            let report = evaluate_run(&scene, &out.cloud, &out.result, 1)?;
            iou += report.mean.iou;
            biou += report.mean.boundary_iou;
            bf1 += report.mean.boundary_f1;
            splits += out.result.decompositions.len();
        }
        let n = seeds as f64;
        println!(
            "{gd:?}: iou {:.4} band iou {:.4} band f1 {:.4} splits/seed {}",
            iou / n,
            biou / n,
            bf1 / n,
            splits as u64 / seeds
        );
    }
    Ok(())
}
