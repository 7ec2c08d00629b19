//! Point-cloud variants of the depth source: back-project every view, merge,
//! then re-render depth either from the points directly or from a voxel map.

use std::collections::BTreeSet;
use std::io::{self, Read, Write};

use crate::depth::DepthImage;
use crate::geometry::{CameraCalibration, Pixel, Point3};

/// Unordered set of world-frame points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        debug_assert!(points
            .iter()
            .all(|p| p.coords.iter().all(|v| v.is_finite())));
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Count-prefixed little-endian dump: `u64` count, then `f32` x, y, z per point.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.points.len() as u64).to_le_bytes())?;
        for p in &self.points {
            for c in [p.x, p.y, p.z] {
                w.write_all(&(c as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let mut n = [0u8; 8];
        r.read_exact(&mut n)?;
        let n = u64::from_le_bytes(n) as usize;
        let mut raw = vec![
            0u8;
            n.checked_mul(12)
                .ok_or_else(|| io::Error::other("point count overflow"))?
        ];
        r.read_exact(&mut raw)?;
        let mut points = Vec::with_capacity(n);
        for chunk in raw.chunks_exact(12) {
            let f = |i: usize| f32::from_le_bytes(chunk[i..i + 4].try_into().unwrap()) as f64;
            let p = Point3::new(f(0), f(4), f(8));
            if !p.coords.iter().all(|v| v.is_finite()) {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    "non-finite point",
                ));
            }
            points.push(p);
        }
        Ok(Self { points })
    }
}

/// Back-projects every `stride`-th valid pixel (in both directions) to the world frame.
pub fn depth_to_cloud(img: &DepthImage, calib: &CameraCalibration, stride: u32) -> PointCloud {
    let stride = stride.max(1) as usize;
    let mut points = Vec::new();
    for y in (0..img.height()).step_by(stride) {
        for x in (0..img.width()).step_by(stride) {
            let d = img.get(x, y);
            if d > 0.0 {
                let pc = calib.unproject_camera(Pixel::new(x as f64, y as f64), d as f64);
                points.push(calib.camera_to_world(&pc));
            }
        }
    }
    PointCloud { points }
}

pub fn merge_clouds<I: IntoIterator<Item = PointCloud>>(clouds: I) -> PointCloud {
    let mut points = Vec::new();
    for c in clouds {
        points.extend(c.points);
    }
    PointCloud { points }
}

/// Writes `depth` into the `nx × ny` pixel block starting at `(x0, y0)` wherever it is
/// nearer than the current value.
fn splat(img: &mut DepthImage, x0: i64, y0: i64, nx: i64, ny: i64, depth: f32) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let xs = x0.max(0)..(x0 + nx).min(w);
    let ys = y0.max(0)..(y0 + ny).min(h);
    let width = w as usize;
    let values = img.values_mut();
    for y in ys {
        let row = &mut values[y as usize * width..(y as usize + 1) * width];
        for x in xs.clone() {
            let cur = &mut row[x as usize];
            if *cur == 0.0 || depth < *cur {
                *cur = depth;
            }
        }
    }
}

/// Z-buffered point splatting: every point covers the pixels within
/// `splat_radius` (Chebyshev) of its projection, keeping the smallest depth.
pub fn cloud_to_depth(
    cloud: &PointCloud,
    calib: &CameraCalibration,
    splat_radius: u32,
) -> DepthImage {
    let mut img = DepthImage::for_camera(calib);
    let r = splat_radius as i64;
    for p in &cloud.points {
        let pc = calib.world_to_camera(p);
        if pc.z <= 0.0 {
            continue;
        }
        let (u, v) = calib.project_camera(&pc).rounded();
        splat(&mut img, u - r, v - r, 2 * r + 1, 2 * r + 1, pc.z as f32);
    }
    img
}

/// Sparse occupancy grid aligned to `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMap {
    pub origin: Point3,
    pub resolution: f64,
    pub occupancy: BTreeSet<[i64; 3]>,
}

impl VoxelMap {
    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn center(&self, idx: &[i64; 3]) -> Point3 {
        Point3::new(
            self.origin.x + (idx[0] as f64 + 0.5) * self.resolution,
            self.origin.y + (idx[1] as f64 + 0.5) * self.resolution,
            self.origin.z + (idx[2] as f64 + 0.5) * self.resolution,
        )
    }

    /// Cloud of voxel centers.
    pub fn centers(&self) -> PointCloud {
        PointCloud {
            points: self.occupancy.iter().map(|i| self.center(i)).collect(),
        }
    }
}

/// Quantizes a cloud into voxels of edge `resolution`. The origin is the
/// cloud's AABB minimum floored to a multiple of the resolution.
pub fn cloud_to_voxelmap(cloud: &PointCloud, resolution: f64) -> VoxelMap {
    assert!(
        resolution > 0.0 && resolution.is_finite(),
        "resolution must be positive"
    );
    if cloud.is_empty() {
        return VoxelMap {
            origin: Point3::origin(),
            resolution,
            occupancy: BTreeSet::new(),
        };
    }
    let mut min = cloud.points[0].coords;
    for p in &cloud.points {
        min = min.inf(&p.coords);
    }
    let origin = Point3::from(min.map(|c| (c / resolution).floor() * resolution));
    let occupancy = cloud
        .points
        .iter()
        .map(|p| {
            let d = (p - origin) / resolution;
            [d.x.floor() as i64, d.y.floor() as i64, d.z.floor() as i64]
        })
        .collect();
    VoxelMap {
        origin,
        resolution,
        occupancy,
    }
}

/// Renders voxel centers as squares of their projected size (`resolution·f/z`
/// pixels, at least one) at the center depth, z-buffered.
pub fn voxelmap_to_depth(vmap: &VoxelMap, calib: &CameraCalibration) -> DepthImage {
    let mut img = DepthImage::for_camera(calib);
    for idx in &vmap.occupancy {
        let pc = calib.world_to_camera(&vmap.center(idx));
        if pc.z <= 0.0 {
            continue;
        }
        let px = calib.project_camera(&pc);
        let nx = (vmap.resolution * calib.fx / pc.z).round().max(1.0);
        let ny = (vmap.resolution * calib.fy / pc.z).round().max(1.0);
        if nx > (calib.width * 2) as f64 || ny > (calib.height * 2) as f64 {
            // voxel engulfs the camera
            continue;
        }
        let x0 = (px.u - (nx - 1.0) / 2.0).round() as i64;
        let y0 = (px.v - (ny - 1.0) / 2.0).round() as i64;
        splat(&mut img, x0, y0, nx as i64, ny as i64, pc.z as f32);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> CameraCalibration {
        CameraCalibration::identity(0, 64, 48, 60.0, 32.0, 24.0)
    }

    #[test]
    fn empty_inputs() {
        let c = cam();
        assert!(depth_to_cloud(&DepthImage::for_camera(&c), &c, 1).is_empty());
        assert_eq!(
            cloud_to_depth(&PointCloud::default(), &c, 1).valid_count(),
            0
        );
        let vm = cloud_to_voxelmap(&PointCloud::default(), 0.05);
        assert!(vm.is_empty());
        assert_eq!(voxelmap_to_depth(&vm, &c).valid_count(), 0);
    }

    #[test]
    fn constant_depth_grid() {
        let c = cam();
        let img = DepthImage::filled(0, 64, 48, 2.0);
        let cloud = depth_to_cloud(&img, &c, 2);
        assert_eq!(cloud.len(), 32 * 24);
        for p in &cloud.points {
            assert_eq!(p.z, 2.0);
            let u = p.x * 60.0 / 2.0 + 32.0;
            assert!((u - u.round()).abs() < 1e-9 && (u.round() as i64) % 2 == 0);
        }
    }

    #[test]
    fn z_buffer_keeps_nearest() {
        let c = cam();
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 3.0), Point3::new(0.0, 0.0, 2.0)]);
        let img = cloud_to_depth(&cloud, &c, 0);
        assert_eq!(img.get(32, 24), 2.0);
        assert_eq!(img.valid_count(), 1);
        let img = cloud_to_depth(&cloud, &c, 1);
        assert_eq!(img.valid_count(), 9);
        assert!((0..48).all(|y| (0..64).all(|x| [0.0, 2.0].contains(&img.get(x, y)))));
    }

    #[test]
    fn own_view_round_trip() {
        let c = cam();
        let mut img = DepthImage::empty(0, 64, 48);
        for y in 10..40 {
            for x in 8..50 {
                img.set(x, y, 1.5 + 0.01 * x as f32);
            }
        }
        let back = cloud_to_depth(&depth_to_cloud(&img, &c, 1), &c, 0);
        for y in 0..48 {
            for x in 0..64 {
                assert!((back.get(x, y) - img.get(x, y)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn single_voxel_one_cell_and_footprint() {
        let cloud = PointCloud::new(vec![
            Point3::new(0.001, 0.002, 2.001),
            Point3::new(0.03, 0.04, 2.04),
            Point3::new(0.01, 0.049, 2.02),
        ]);
        let vm = cloud_to_voxelmap(&cloud, 0.05);
        assert_eq!(vm.len(), 1);
        let center = vm.center(vm.occupancy.iter().next().unwrap());
        let c = CameraCalibration::identity(0, 640, 480, 500.0, 320.0, 240.0);
        let img = voxelmap_to_depth(&vm, &c);
        // 0.05 * 500 / 2.025 = 12.3 → 12 px square
        assert_eq!(img.valid_count(), 144);
        let (px, _) = c.project(&center).unwrap();
        let (u, v) = px.rounded();
        assert_eq!(img.get(u as u32, v as u32), center.z as f32);
    }

    #[test]
    fn cloud_dump_round_trip() {
        let cloud = PointCloud::new(vec![
            Point3::new(1.5, -2.25, 0.125),
            Point3::new(0.0, 3.0, 4.0),
        ]);
        let mut buf = Vec::new();
        cloud.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 24);
        assert_eq!(PointCloud::read_binary(&buf[..]).unwrap(), cloud);
        assert!(PointCloud::read_binary(&buf[..20]).is_err());
    }

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 0..200).prop_map(|v| {
            PointCloud::new(
                v.into_iter()
                    .map(|[x, y, z]| Point3::new(x, y, z + 2.5))
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn voxel_count_bounded_and_centers_idempotent(cloud in arb_cloud(), res in 0.01f64..0.3) {
            let vm = cloud_to_voxelmap(&cloud, res);
            prop_assert!(vm.len() <= cloud.len());
            let again = cloud_to_voxelmap(&vm.centers(), res);
            if !cloud.is_empty() {
                prop_assert_eq!(again, vm);
            }
        }

        #[test]
        fn rendering_is_order_independent_and_min(cloud in arb_cloud(), r in 0u32..3, seed in any::<u64>()) {
            let c = cam();
            let a = cloud_to_depth(&cloud, &c, r);
            let mut shuffled = cloud.points.clone();
            let n = shuffled.len();
            if n > 1 {
                let mut s = seed;
                for i in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    shuffled.swap(i, (s >> 33) as usize % (i + 1));
                }
            }
            let b = cloud_to_depth(&PointCloud::new(shuffled), &c, r);
            prop_assert_eq!(&a, &b);
            let merged = merge_clouds([cloud.clone(), PointCloud::default()]);
            prop_assert_eq!(&merged, &cloud);
            // every rendered pixel is the minimum over the splats that cover it
            for y in 0..48u32 {
                for x in 0..64u32 {
                    let mut best: Option<f32> = None;
                    for p in &cloud.points {
                        let pc = c.world_to_camera(p);
                        if pc.z <= 0.0 { continue; }
                        let (u, v) = c.project_camera(&pc).rounded();
                        if (u - x as i64).abs() <= r as i64 && (v - y as i64).abs() <= r as i64 {
                            let z = pc.z as f32;
                            best = Some(best.map_or(z, |b| b.min(z)));
                        }
                    }
                    prop_assert_eq!(a.get(x, y), best.unwrap_or(0.0));
                }
            }
        }
    }
}
