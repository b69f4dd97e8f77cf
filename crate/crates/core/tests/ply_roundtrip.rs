use std::io::Cursor;

use nalgebra::{Quaternion, SymmetricEigen, UnitQuaternion};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

use splatseg::edit::{apply_edit, EditTransform, ShRotation};
use splatseg::gaussian::{Gaussian, GaussianCloud, Vec3};
use splatseg::ply::{load_ply, read_ply, save_ply, write_ply};
use splatseg::sh::ShCoeffs;

const PROPS: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

/// Three hand-picked vertices: identity, a half turn about x and a
/// 120° turn about (1, 1, 1); all quaternions are exactly unit in f32.
const FIXTURE: [[f32; 14]; 3] = [
    [0.0, 0.0, 0.0, 0.5, -0.25, 1.0, 2.0, -2.0, -1.5, -3.0, 1.0, 0.0, 0.0, 0.0],
    [1.5, -2.25, 3.0, -1.0, 0.0, 0.75, -1.0, -0.5, -0.5, -0.5, 0.0, 1.0, 0.0, 0.0],
    [-0.125, 4.0, 0.5, 0.0, 1.25, -0.5, 0.0, 0.25, -4.0, -2.0, 0.5, 0.5, 0.5, 0.5],
];

fn fixture_bytes() -> Vec<u8> {
    let mut out = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", FIXTURE.len());
    for p in PROPS {
        out.push_str(&format!("property float {p}\n"));
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    for row in FIXTURE {
        for v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

#[test]
fn fixture_round_trips_byte_for_byte() {
    let bytes = fixture_bytes();
    let cloud = read_ply(&mut Cursor::new(&bytes)).unwrap();
    assert_eq!(cloud.len(), 3);

    let g = &cloud[1];
    assert_eq!(g.position, Vec3::new(1.5, -2.25, 3.0));
    assert!((g.opacity - 1.0 / (1.0 + 1f64.exp())).abs() < 1e-12);
    assert!((g.scale.x - (-0.5f64).exp()).abs() < 1e-12);
    assert_eq!(cloud.sh_degree(), 0);

    let mut again = Vec::new();
    write_ply(&cloud, &mut again).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn fixture_survives_the_file_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.ply");
    std::fs::write(&path, fixture_bytes()).unwrap();
    let cloud = load_ply(&path).unwrap();
    let out = dir.path().join("out.ply");
    save_ply(&cloud, &out).unwrap();
    assert_eq!(std::fs::read(out).unwrap(), fixture_bytes());
}

fn arb_gaussian(degree: u8) -> impl Strategy<Value = Gaussian> {
    let n = (degree as usize + 1).pow(2);
    (
        prop::array::uniform3(-10.0f64..10.0),
        prop::array::uniform3(0.001f64..5.0),
        prop::array::uniform4(-1.0f64..1.0),
        0.01f64..0.99,
        prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), n),
    )
        .prop_filter_map("degenerate rotation", |(p, s, q, o, sh)| {
            let q = Quaternion::new(q[0], q[1], q[2], q[3]);
            (q.norm() > 0.1).then(|| {
                Gaussian::new(
                    Vec3::from(p),
                    Vec3::from(s),
                    q,
                    o,
                    ShCoeffs::from_coeffs(sh).unwrap(),
                )
                .unwrap()
            })
        })
}

fn arb_cloud() -> impl Strategy<Value = GaussianCloud> {
    (0u8..=3).prop_flat_map(|d| {
        prop::collection::vec(arb_gaussian(d), 1..20).prop_map(|gs| GaussianCloud::new(gs, "prop"))
    })
}

/// Same rotation whether stored as q or −q.
fn same_rotation(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    1.0 - a.coords.dot(&b.coords).abs()
}

proptest! {
    #[test]
    fn save_then_load_preserves_fields(cloud in arb_cloud()) {
        let mut bytes = Vec::new();
        write_ply(&cloud, &mut bytes).unwrap();
        let back = read_ply(&mut Cursor::new(bytes)).unwrap();
        prop_assert_eq!(back.len(), cloud.len());
        prop_assert_eq!(back.sh_degree(), cloud.sh_degree());
        for (a, b) in cloud.iter().zip(back.iter()) {
            // f32 storage: half an ulp at 10 is about 5e-7.
            prop_assert!((a.position - b.position).amax() < 1e-6);
            prop_assert!(((a.scale - b.scale).component_div(&a.scale)).amax() < 1e-6);
            prop_assert!((a.opacity - b.opacity).abs() < 1e-6);
            prop_assert!(same_rotation(&a.rotation, &b.rotation) < 1e-6);
            for (ca, cb) in a.sh.coeffs().iter().zip(b.sh.coeffs()) {
                for k in 0..3 {
                    prop_assert!((ca[k] - cb[k]).abs() < 1e-6);
                }
            }
            prop_assert!(b.lineage.is_none());
        }
    }

    #[test]
    fn edits_leave_the_complement_bitwise_equal(
        cloud in arb_cloud(),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..8),
        kind in 0u8..3,
        v in prop::array::uniform3(-3.0f64..3.0),
    ) {
        let subset: Vec<usize> = picks.iter().map(|i| i.index(cloud.len())).collect();
        let t = match kind {
            0 => EditTransform::Remove,
            1 => EditTransform::Translate { translation: v },
            _ => EditTransform::Rotate { rotation: [0.3, v[0], v[1], v[2] + 0.1], pivot: v },
        };
        let (out, _) = apply_edit(&cloud, &subset, &t, ShRotation::Rotate).unwrap();
        match t {
            EditTransform::Remove => {
                let rest: Vec<&Gaussian> = (0..cloud.len())
                    .filter(|i| !subset.contains(i))
                    .map(|i| &cloud[i])
                    .collect();
                prop_assert_eq!(out.len(), rest.len());
                for (a, b) in out.iter().zip(rest) {
                    prop_assert_eq!(a, b);
                }
            }
            _ => {
                prop_assert_eq!(out.len(), cloud.len());
                for i in (0..cloud.len()).filter(|i| !subset.contains(i)) {
                    prop_assert_eq!(&out[i], &cloud[i]);
                }
            }
        }
    }
}

#[test]
fn loaded_covariances_are_positive_definite() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let cloud = prop::collection::vec(arb_gaussian(0), 1000)
        .new_tree(&mut runner)
        .unwrap()
        .current();
    let mut bytes = Vec::new();
    write_ply(&GaussianCloud::new(cloud, "psd"), &mut bytes).unwrap();
    let loaded = read_ply(&mut Cursor::new(bytes)).unwrap();
    assert_eq!(loaded.len(), 1000);
    for g in loaded.iter() {
        let cov = g.covariance();
        assert_eq!(cov, cov.transpose());
        let eig = SymmetricEigen::new(cov);
        let min = eig.eigenvalues.min();
        // Exact eigenvalues are scale²; allow rounding relative to the largest.
        assert!(min > -1e-12 * eig.eigenvalues.max(), "eigenvalue {min}");
        let mut want: Vec<f64> = g.scale.iter().map(|s| s * s).collect();
        let mut got: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (w, g) in want.iter().zip(&got) {
            assert!((w - g).abs() <= 1e-9 * want[2].max(1.0));
        }
    }
}
