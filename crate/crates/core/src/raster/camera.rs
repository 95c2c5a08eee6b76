use nalgebra::{Isometry3, Point3};

use crate::mesh::{Mesh, Vec3};

/// Center of the normalized unit cube; every rig camera looks here.
pub const CUBE_CENTER: [f64; 3] = [0.5, 0.5, 0.5];

/// Perspective pinhole camera orbiting a look-at point. Y is up; azimuth 0
/// looks from +Z toward -Z, azimuth 90 from +X.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub distance: f64,
    pub fov_y_deg: f64,
    pub look_at: Vec3,
    /// Square image side in pixels.
    pub image_size: usize,
}

/// Geometry closer than this to the eye plane is not rasterized.
pub const NEAR_PLANE: f64 = 1e-3;

impl Camera {
    pub fn eye(&self) -> Vec3 {
        let (az, el) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        self.look_at + self.distance * Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos())
    }

    pub fn view(&self) -> Isometry3<f64> {
        let eye = Point3::from(self.eye());
        let target = Point3::from(self.look_at);
        Isometry3::look_at_rh(&eye, &target, &Vec3::y())
    }

    fn focal(&self) -> f64 {
        // pixels per unit of (x / depth)
        0.5 * self.image_size as f64 / (0.5 * self.fov_y_deg.to_radians()).tan()
    }

    /// Pixel coordinates (x right, y down, centers at +0.5) and view depth.
    pub fn project(&self, view: &Isometry3<f64>, p: &Vec3) -> Option<([f64; 2], f64)> {
        let c = view.transform_point(&Point3::from(*p));
        let depth = -c.z;
        if depth < NEAR_PLANE {
            return None;
        }
        let f = self.focal();
        let half = 0.5 * self.image_size as f64;
        Some(([half + f * c.x / depth, half - f * c.y / depth], depth))
    }

    /// World-space ray through a pixel-plane point, normalized direction.
    pub fn ray(&self, px: f64, py: f64) -> (Vec3, Vec3) {
        let f = self.focal();
        let half = 0.5 * self.image_size as f64;
        let dir_cam = Vec3::new((px - half) / f, -(py - half) / f, -1.0);
        let inv = self.view().inverse();
        let dir = inv.transform_vector(&dir_cam).normalize();
        (self.eye(), dir)
    }
}

/// How far the rig sits from the look-at point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistancePolicy {
    /// Bounding sphere of this radius (around the look-at point) fills
    /// `fill` of the frame height.
    Frame { radius: f64, fill: f64 },
    Fixed(f64),
}

impl DistancePolicy {
    pub fn distance(&self, fov_y_deg: f64) -> f64 {
        match *self {
            DistancePolicy::Frame { radius, fill } => (radius / fill) / (0.5 * fov_y_deg.to_radians()).sin(),
            DistancePolicy::Fixed(d) => d,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewConfig {
    pub image_size: usize,
    pub elevation_deg: f64,
    pub fov_y_deg: f64,
    pub distance: DistancePolicy,
}

pub const DEFAULT_FOV_Y_DEG: f64 = 40.0;
pub const DEFAULT_ELEVATION_DEG: f64 = 20.0;
pub const FRAME_FILL: f64 = 0.9;

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            image_size: 512,
            elevation_deg: DEFAULT_ELEVATION_DEG,
            fov_y_deg: DEFAULT_FOV_Y_DEG,
            distance: DistancePolicy::Frame {
                radius: 0.5 * 3f64.sqrt(),
                fill: FRAME_FILL,
            },
        }
    }
}

impl ViewConfig {
    /// Frame the given mesh: its bounding sphere about the cube center.
    pub fn framing(mesh: &Mesh, image_size: usize) -> Self {
        Self {
            image_size,
            distance: DistancePolicy::Frame {
                radius: bounding_radius(mesh),
                fill: FRAME_FILL,
            },
            ..Self::default()
        }
    }
}

/// Radius of the smallest sphere about the cube center holding every vertex.
pub fn bounding_radius(mesh: &Mesh) -> f64 {
    let c = Vec3::from(CUBE_CENTER);
    mesh.positions.iter().map(|p| (p - c).norm()).fold(0.0, f64::max)
}

/// `n` cameras at azimuths k * 360 / n, shared elevation and distance.
pub fn orbit_cameras(n: usize, config: &ViewConfig) -> Vec<Camera> {
    let distance = config.distance.distance(config.fov_y_deg);
    (0..n)
        .map(|k| Camera {
            azimuth_deg: k as f64 * 360.0 / n as f64,
            elevation_deg: config.elevation_deg,
            distance,
            fov_y_deg: config.fov_y_deg,
            look_at: Vec3::from(CUBE_CENTER),
            image_size: config.image_size,
        })
        .collect()
}

/// The fixed four-view rig: azimuths 0/90/180/270 at the configured elevation.
pub fn make_view_set(config: &ViewConfig) -> [Camera; 4] {
    let v = orbit_cameras(4, config);
    [v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rig_angles() {
        let cams = make_view_set(&ViewConfig::default());
        let az: Vec<f64> = cams.iter().map(|c| c.azimuth_deg).collect();
        assert_eq!(az, vec![0.0, 90.0, 180.0, 270.0]);
        assert!(cams.iter().all(|c| c.elevation_deg == 20.0));
    }

    #[test]
    fn rig_is_equidistant() {
        let cams = make_view_set(&ViewConfig::default());
        let d: Vec<f64> = cams.iter().map(|c| (c.eye() - c.look_at).norm()).collect();
        let spread = d.iter().cloned().fold(f64::MIN, f64::max) - d.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-9);
    }

    #[test]
    fn framing_distance_formula() {
        let r = 0.5 * 3f64.sqrt();
        let expected = (r / 0.9) / 20f64.to_radians().sin();
        let cams = make_view_set(&ViewConfig::default());
        assert!((cams[0].distance - expected).abs() < 1e-12);
        assert!((expected - 2.813430).abs() < 1e-5);
    }

    #[test]
    fn view_matrix_is_orthonormal() {
        for cam in make_view_set(&ViewConfig::default()) {
            let m = cam.view().to_homogeneous();
            let r = m.fixed_view::<3, 3>(0, 0);
            let should_be_id = r * r.transpose();
            assert!((should_be_id - nalgebra::Matrix3::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn look_at_projects_to_image_center() {
        let cam = &make_view_set(&ViewConfig::default())[1];
        let ([x, y], depth) = cam.project(&cam.view(), &cam.look_at).unwrap();
        assert!((x - 256.0).abs() < 1e-9 && (y - 256.0).abs() < 1e-9);
        assert!((depth - cam.distance).abs() < 1e-12);
    }

    #[test]
    fn ray_hits_projected_point() {
        let cam = &make_view_set(&ViewConfig::default())[2];
        let p = Vec3::new(0.2, 0.7, 0.4);
        let (px, _) = cam.project(&cam.view(), &p).unwrap();
        let (o, d) = cam.ray(px[0], px[1]);
        let to_p = (p - o).normalize();
        assert!((to_p - d).norm() < 1e-12);
    }

    #[test]
    fn azimuth_zero_looks_down_negative_z() {
        let cam = &make_view_set(&ViewConfig::default())[0];
        let (_, d) = cam.ray(256.0, 256.0);
        assert!(d.z < -0.9);
    }
}
