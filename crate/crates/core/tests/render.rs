mod common;

use common::{random_camera, random_cloud, render_reference, rng};
use rand::Rng;
use splatseg::camera::Camera;
use splatseg::gaussian::{Gaussian, GaussianCloud, Vec3};
use splatseg::render::{render, render_id_map, render_labeled, RenderOptions, TRANSMITTANCE_MIN};
use splatseg::synth::{gen_scene, mask_metrics, preset};

use nalgebra::UnitQuaternion;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn tiled_render_matches_per_pixel_reference() {
    let mut r = rng(11);
    for scene in 0..5 {
        let cloud = random_cloud(&mut r, 50, 1.0);
        let cam = random_camera(&mut r, scene, 64, 64, 3.0..6.0);
        let labels = vec![0; cloud.len()];
        let got = render(&cloud, &cam, &RenderOptions::default());
        let want = render_reference(&cloud, &labels, &cam);
        assert!(max_diff(&got.alpha, &want.alpha) < 1e-5);
        assert!(max_diff(&got.depth, &want.depth) < 1e-5);
        for (a, b) in got.rgb.iter().zip(&want.rgb) {
            assert!(max_diff(a, b) < 1e-5, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn transparent_gaussian_changes_nothing() {
    let mut r = rng(12);
    for scene in 0..10 {
        let mut cloud = random_cloud(&mut r, 40, 1.0);
        let cam = random_camera(&mut r, scene, 64, 64, 3.0..6.0);
        let before = render(&cloud, &cam, &RenderOptions::default());
        let mut ghost = cloud[r.random_range(0..cloud.len())].clone();
        ghost.opacity = 0.0;
        ghost.scale *= 3.0;
        let at = r.random_range(0..=cloud.len());
        cloud.gaussians.insert(at, ghost);
        let after = render(&cloud, &cam, &RenderOptions::default());
        assert_eq!(before, after);
    }
}

#[test]
fn alpha_is_monotone_in_opacity() {
    let mut r = rng(13);
    for scene in 0..10 {
        let mut cloud = random_cloud(&mut r, 40, 1.0);
        let cam = random_camera(&mut r, scene, 64, 64, 3.0..6.0);
        let before = render(&cloud, &cam, &RenderOptions::default());
        let i = r.random_range(0..cloud.len());
        let g = &mut cloud.gaussians[i];
        g.opacity = r.random_range(g.opacity..1.0);
        let after = render(&cloud, &cam, &RenderOptions::default());
        // Early termination can only hide the light left below the cutoff.
        for (a, b) in before.alpha.iter().zip(&after.alpha) {
            assert!(b - a >= -TRANSMITTANCE_MIN, "alpha dropped from {a} to {b}");
        }
    }
}

#[test]
fn front_occluder_owns_the_id_map() {
    let cam = Camera::look_at(0, 64, 64, 80.0, Vec3::new(0.0, -5.0, 0.0), Vec3::zeros(), Vec3::z())
        .unwrap();
    let disc = |y: f64, label_color: [f64; 3]| {
        Gaussian::with_color(
            Vec3::new(0.0, y, 0.0),
            Vec3::new(0.4, 0.05, 0.4),
            UnitQuaternion::identity(),
            0.95,
            label_color,
        )
        .unwrap()
    };
    // Object 2 sits in front of object 1 and is a little smaller.
    let mut front = disc(-1.0, [0.0, 0.0, 1.0]);
    front.scale = Vec3::new(0.12, 0.05, 0.12);
    let cloud = GaussianCloud::new(vec![disc(1.0, [1.0, 0.0, 0.0]), front], "occluder");
    let labels = [1, 2];
    let got = render_id_map(&cloud, &labels, &cam).unwrap();
    let want = render_reference(&cloud, &labels, &cam);
    assert_eq!(got.data, want.ids);
    assert_eq!(got.get(32, 32), 2);
    assert!(got.count(1) > 0 && got.count(2) > 0);
}

#[test]
fn labeled_render_matches_reference_on_random_scenes() {
    let mut r = rng(14);
    for scene in 0..5 {
        let cloud = random_cloud(&mut r, 50, 1.0);
        let cam = random_camera(&mut r, scene, 48, 48, 3.0..6.0);
        let labels: Vec<u16> = (0..cloud.len()).map(|_| r.random_range(1..4)).collect();
        let got = render_labeled(&cloud, None, &labels, &cam, &RenderOptions::default()).unwrap();
        let want = render_reference(&cloud, &labels, &cam);
        let ids = got.id_map.unwrap();
        // Near-ties between labels may flip under rounding; allow a handful.
        let off = ids.data.iter().zip(&want.ids).filter(|(a, b)| a != b).count();
        assert!(off <= 2, "{off} id pixels differ");
    }
}

#[test]
fn object_render_agrees_with_ground_truth_mask() {
    // The sphere is never occluded by the plane it rests on.
    let scene = gen_scene(&preset("sphere_on_plane").unwrap(), 3).unwrap();
    let subset = scene.object_indices(1);
    for (cam, gt) in scene.cameras.iter().zip(&scene.gt_masks) {
        let pred = splatseg::render::render_object_mask(&scene.cloud, &subset, cam).unwrap();
        let m = mask_metrics(&pred, &gt.select(1), 3).unwrap();
        assert!(m.iou > 0.95, "view {}: iou {}", cam.id, m.iou);
    }
}
