//! Pinhole cameras, center projection, and local-affine (EWA) covariance projection.
//!
//! Camera space follows the usual vision convention: +x right, +y down, +z
//! forward. Pixel `(u, v)` has its center at integer coordinates, so the
//! pixel containing a projected point is found by rounding.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, Vec3};

pub type Vec2 = Vector2<f64>;

/// Centers at or closer than this camera-space depth are treated as not visible.
pub const Z_NEAR: f64 = 0.01;

/// Low-pass term added to the diagonal of every projected covariance, in px².
pub const COV2D_FLOOR: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        world_to_camera: Matrix4<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Camera(format!("camera {id}: empty image size")));
        }
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::Camera(format!(
                "camera {id}: focal lengths must be positive"
            )));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::Camera(format!(
                "camera {id}: principal point ({cx}, {cy}) outside the image"
            )));
        }
        let rotation: Matrix3<f64> = world_to_camera.fixed_view::<3, 3>(0, 0).into_owned();
        let translation: Vec3 = world_to_camera.fixed_view::<3, 1>(0, 3).into_owned();
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if ortho_err > 1e-6 || (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::Camera(format!(
                "camera {id}: world_to_camera rotation is not a proper rotation"
            )));
        }
        let bottom = world_to_camera.fixed_view::<1, 4>(3, 0);
        if (bottom[0].abs() + bottom[1].abs() + bottom[2].abs() + (bottom[3] - 1.0).abs()) > 1e-9 {
            return Err(Error::Camera(format!(
                "camera {id}: world_to_camera bottom row must be [0 0 0 1]"
            )));
        }
        Ok(Camera {
            id,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        })
    }

    /// Camera at `eye` looking at `target`; `up` is the world direction that
    /// should appear upward in the image.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        id: u32,
        width: u32,
        height: u32,
        focal: f64,
        eye: Vec3,
        target: Vec3,
        up: Vec3,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::Camera(format!(
                "camera {id}: up vector parallel to view direction"
            )));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -rot * eye;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Camera::new(
            id,
            width,
            height,
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            m,
        )
    }

    pub fn world_to_camera(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vec3 {
        -self.rotation.transpose() * self.translation
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Pixel position and camera-space depth of a world point. Points with
    /// depth ≤ [`Z_NEAR`] still get a (meaningless) pixel; callers check depth.
    pub fn project_center(&self, p: &Vec3) -> (Vec2, f64) {
        let c = self.to_camera(p);
        (
            Vec2::new(self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy),
            c.z,
        )
    }

    /// Integer pixel containing `p`, if inside the image.
    pub fn pixel_of(&self, p: &Vec2) -> Option<(u32, u32)> {
        let (u, v) = (p.x.round(), p.y.round());
        if u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64 {
            Some((u as u32, v as u32))
        } else {
            None
        }
    }

    /// Jacobian of the perspective map at camera-space point `t`.
    pub fn ewa_jacobian(&self, t: &Vec3) -> Matrix2x3<f64> {
        let iz = 1.0 / t.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * t.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * t.y * iz2,
        )
    }

    /// The local affine map `J·W` around world point `mu`: world offsets from
    /// `mu` to pixel offsets from its projected center.
    pub fn linearized(&self, mu: &Vec3) -> Result<Matrix2x3<f64>> {
        let t = self.to_camera(mu);
        if t.z <= Z_NEAR {
            return Err(Error::NotVisible { depth: t.z });
        }
        Ok(self.ewa_jacobian(&t) * self.rotation)
    }
}

/// `M Σ Mᵀ`, symmetrized, plus `floor` on the diagonal.
pub fn project_covariance_with(
    m: &Matrix2x3<f64>,
    cov3: &Matrix3<f64>,
    floor: f64,
) -> Matrix2<f64> {
    let c = m * cov3 * m.transpose();
    let off = 0.5 * (c[(0, 1)] + c[(1, 0)]);
    Matrix2::new(c[(0, 0)] + floor, off, off, c[(1, 1)] + floor)
}

/// Screen-space covariance of `g` seen from `cam`.
pub fn project_covariance(cam: &Camera, g: &Gaussian, floor: f64) -> Result<Matrix2<f64>> {
    let m = cam.linearized(&g.position)?;
    Ok(project_covariance_with(&m, &g.covariance(), floor))
}

/// Largest eigenvalue and its unit eigenvector of a symmetric 2×2 matrix.
///
/// The eigenvector sign is fixed so that its x component is positive (or,
/// when x is zero, its y component), which makes `center - h·v` the
/// lexicographically smaller endpoint.
pub fn major_eigen(cov: &Matrix2<f64>) -> (f64, Vec2) {
    let (a, b, c) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    let half_diff = 0.5 * (a - c);
    let disc = (half_diff * half_diff + b * b).sqrt();
    let lambda = 0.5 * (a + c) + disc;
    let v = if b == 0.0 {
        if a >= c {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::new(0.0, 1.0)
        }
    } else if half_diff >= 0.0 {
        // (λ - c, b) is better conditioned when a ≥ c.
        Vec2::new(lambda - c, b).normalize()
    } else {
        Vec2::new(b, lambda - a).normalize()
    };
    let v = if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
        -v
    } else {
        v
    };
    (lambda, v)
}

/// Endpoints `center ± 3·sqrt(λ_max)·v_max`, lexicographically smaller first.
pub fn long_axis(cov2d: &Matrix2<f64>, center: &Vec2) -> (Vec2, Vec2) {
    let (lambda, v) = major_eigen(cov2d);
    let half = 3.0 * lambda.max(0.0).sqrt();
    (center - v * half, center + v * half)
}

/// A Gaussian as seen from one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedGaussian {
    pub center2d: Vec2,
    pub depth: f64,
    pub cov2d: Matrix2<f64>,
    /// `(A, B)` with A the lexicographically smaller endpoint.
    pub long_axis_endpoints: (Vec2, Vec2),
    /// Local principal axis of the 3D Gaussian whose image dominates the
    /// screen-space long axis, oriented so its image points from A toward B.
    pub long_axis_dir3d: Vec3,
    pub long_axis_halflen3d: f64,
    /// Index (0..3) of that principal axis in the Gaussian's local frame.
    pub long_axis_index: usize,
    /// The linearized world-to-pixel map used for the covariance.
    pub linear_map: Matrix2x3<f64>,
    pub visible: bool,
}

impl ProjectedGaussian {
    pub fn long_axis_length(&self) -> f64 {
        (self.long_axis_endpoints.1 - self.long_axis_endpoints.0).norm()
    }
}

pub fn project_gaussian(cam: &Camera, g: &Gaussian, floor: f64) -> ProjectedGaussian {
    let (center2d, depth) = cam.project_center(&g.position);
    let m = match cam.linearized(&g.position) {
        Ok(m) => m,
        Err(_) => {
            return ProjectedGaussian {
                center2d,
                depth,
                cov2d: Matrix2::zeros(),
                long_axis_endpoints: (center2d, center2d),
                long_axis_dir3d: Vec3::zeros(),
                long_axis_halflen3d: 0.0,
                long_axis_index: 0,
                linear_map: Matrix2x3::zeros(),
                visible: false,
            }
        }
    };
    let cov2d = project_covariance_with(&m, &g.covariance(), floor);
    let endpoints = long_axis(&cov2d, &center2d);
    let (_, v) = major_eigen(&cov2d);
    let r = g.rotation_matrix();
    let (k, _) = (0..3)
        .map(|k| (k, (m * r.column(k)).norm() * g.scale[k]))
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    let mut dir: Vec3 = r.column(k).into_owned();
    if (m * dir).dot(&v) < 0.0 {
        dir = -dir;
    }
    ProjectedGaussian {
        center2d,
        depth,
        cov2d,
        long_axis_endpoints: endpoints,
        long_axis_dir3d: dir,
        long_axis_halflen3d: 3.0 * g.scale[k],
        long_axis_index: k,
        linear_map: m,
        visible: true,
    }
}

/// One line of the camera JSON-lines format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major 4×4.
    pub world_to_camera: Vec<f64>,
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> Self {
        let m = c.world_to_camera();
        CameraRecord {
            id: c.id,
            width: c.width,
            height: c.height,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            world_to_camera: (0..4)
                .flat_map(|r| (0..4).map(move |col| m[(r, col)]))
                .collect(),
        }
    }
}

impl TryFrom<CameraRecord> for Camera {
    type Error = Error;

    fn try_from(r: CameraRecord) -> Result<Self> {
        if r.world_to_camera.len() != 16 {
            return Err(Error::Camera(format!(
                "camera {}: world_to_camera needs 16 values, got {}",
                r.id,
                r.world_to_camera.len()
            )));
        }
        let m = Matrix4::from_row_slice(&r.world_to_camera);
        Camera::new(r.id, r.width, r.height, r.fx, r.fy, r.cx, r.cy, m)
    }
}

/// Reads cameras, sorted by ascending id.
pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut cams = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CameraRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Camera(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        cams.push(Camera::try_from(rec)?);
    }
    cams.sort_by_key(|c| c.id);
    if cams.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::Camera("duplicate camera id".into()));
    }
    Ok(cams)
}

pub fn write_cameras(cams: &[Camera], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for c in cams {
        serde_json::to_writer(&mut w, &CameraRecord::from(c))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Converts a COLMAP text model (`cameras.txt` + `images.txt`) to cameras.
///
/// Only undistorted models (`PINHOLE`, `SIMPLE_PINHOLE`) are accepted. Output
/// ids are assigned 0.. in ascending image-name order.
pub fn import_colmap(cameras_txt: &str, images_txt: &str) -> Result<Vec<Camera>> {
    use std::collections::HashMap;
    let mut intrinsics: HashMap<u32, (u32, u32, f64, f64, f64, f64)> = HashMap::new();
    for line in cameras_txt
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() < 5 {
            return Err(Error::Camera(format!("bad cameras.txt line `{line}`")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Camera(format!("bad number `{s}` in `{line}`")))
        };
        let id = num(t[0])? as u32;
        let (w, h) = (num(t[2])? as u32, num(t[3])? as u32);
        let params: Vec<f64> = t[4..].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let k = match (t[1], params.as_slice()) {
            ("PINHOLE", [fx, fy, cx, cy, ..]) => (w, h, *fx, *fy, *cx, *cy),
            ("SIMPLE_PINHOLE", [f, cx, cy, ..]) => (w, h, *f, *f, *cx, *cy),
            (model, _) => {
                return Err(Error::Camera(format!(
                    "unsupported COLMAP camera model `{model}` (undistort the dataset first)"
                )))
            }
        };
        intrinsics.insert(id, k);
    }

    let mut entries = Vec::new();
    let mut lines = images_txt
        .lines()
        .map(str::trim)
        .filter(|l| !l.starts_with('#'));
    while let Some(line) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() < 10 {
            return Err(Error::Camera(format!("bad images.txt line `{line}`")));
        }
        let v: Vec<f64> = t[1..8]
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Camera(format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        let cam_id: u32 = t[8]
            .parse()
            .map_err(|_| Error::Camera(format!("bad camera id in `{line}`")))?;
        entries.push((t[9].to_string(), v, cam_id));
        // Each image line is followed by its 2D point list.
        lines.next();
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));

    entries
        .into_iter()
        .enumerate()
        .map(|(i, (_, v, cam_id))| {
            let (w, h, fx, fy, cx, cy) = *intrinsics.get(&cam_id).ok_or_else(|| {
                Error::Camera(format!("image references unknown camera {cam_id}"))
            })?;
            let q = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
            let mut m = Matrix4::identity();
            m.fixed_view_mut::<3, 3>(0, 0)
                .copy_from(q.to_rotation_matrix().matrix());
            m[(0, 3)] = v[4];
            m[(1, 3)] = v[5];
            m[(2, 3)] = v[6];
            Camera::new(i as u32, w, h, fx, fy, cx, cy, m)
        })
        .collect()
}
