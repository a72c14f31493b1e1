//! Dense axis-aligned voxel occupancy grid with sphere collision queries.

use std::io::{Read, Write};
use std::path::Path;

use bitvec::prelude::*;
use nalgebra::Vector3;

use crate::geom::Aabb;
use crate::num::{real, to_f64, Real};

use super::WorldError;

/// Dense bit grid. Voxel `(i, j, k)` covers
/// `origin + [i, i+1) * voxel_size` per axis; its center sits at
/// `origin + (i + 0.5) * voxel_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid<S: Real> {
    origin: Vector3<S>,
    voxel_size: S,
    dims: [u32; 3],
    occupied: BitVec<u8, Lsb0>,
}

impl<S: Real> OccupancyGrid<S> {
    /// Empty grid with explicit geometry.
    pub fn empty(origin: Vector3<S>, voxel_size: S, dims: [u32; 3]) -> Result<Self, WorldError> {
        if voxel_size <= S::zero() {
            return Err(WorldError::BadVoxelSize(to_f64(voxel_size)));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(WorldError::BadGridFile("zero dimension"));
        }
        let n = dims.iter().map(|&d| d as u128).product::<u128>();
        if n > (1 << 33) {
            return Err(WorldError::GridTooLarge(n));
        }
        Ok(Self { origin, voxel_size, dims, occupied: bitvec![u8, Lsb0; 0; n as usize] })
    }

    pub fn origin(&self) -> Vector3<S> {
        self.origin
    }

    pub fn voxel_size(&self) -> S {
        self.voxel_size
    }

    pub fn dims(&self) -> [u32; 3] {
        self.dims
    }

    pub fn voxel_count(&self) -> usize {
        self.occupied.len()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.count_ones()
    }

    fn flat(&self, c: [u32; 3]) -> usize {
        // x-fastest layout, matching the export format.
        (c[0] as usize)
            + self.dims[0] as usize * (c[1] as usize + self.dims[1] as usize * c[2] as usize)
    }

    /// Voxel coordinate containing `p`, or `None` outside the grid.
    pub fn voxel_of(&self, p: Vector3<S>) -> Option<[u32; 3]> {
        let mut c = [0u32; 3];
        for i in 0..3 {
            let f = ((p[i] - self.origin[i]) / self.voxel_size).floor();
            let idx = to_f64(f);
            if idx < 0.0 || idx >= self.dims[i] as f64 {
                return None;
            }
            c[i] = idx as u32;
        }
        Some(c)
    }

    /// World-frame center of a voxel.
    pub fn voxel_center(&self, c: [u32; 3]) -> Vector3<S> {
        let half = real::<S>(0.5);
        Vector3::new(
            self.origin.x + (real::<S>(c[0] as f64) + half) * self.voxel_size,
            self.origin.y + (real::<S>(c[1] as f64) + half) * self.voxel_size,
            self.origin.z + (real::<S>(c[2] as f64) + half) * self.voxel_size,
        )
    }

    pub fn is_occupied(&self, c: [u32; 3]) -> bool {
        self.occupied[self.flat(c)]
    }

    pub fn set_occupied(&mut self, c: [u32; 3], value: bool) {
        let i = self.flat(c);
        self.occupied.set(i, value);
    }

    /// Mark the voxel containing `p`, ignoring out-of-bounds points.
    pub fn mark_point(&mut self, p: Vector3<S>) {
        if let Some(c) = self.voxel_of(p) {
            self.set_occupied(c, true);
        }
    }

    /// True iff any occupied voxel center lies within `radius` of `center`.
    /// Visits only voxels inside the sphere's bounding box.
    pub fn check_collision(&self, center: Vector3<S>, radius: S) -> bool {
        debug_assert!(radius > S::zero());
        let mut lo = [0u32; 3];
        let mut hi = [0u32; 3];
        for i in 0..3 {
            let a = to_f64(((center[i] - radius - self.origin[i]) / self.voxel_size).floor());
            let b = to_f64(((center[i] + radius - self.origin[i]) / self.voxel_size).floor());
            if b < 0.0 || a >= self.dims[i] as f64 {
                return false; // sphere does not overlap the grid
            }
            lo[i] = a.max(0.0) as u32;
            hi[i] = b.min((self.dims[i] - 1) as f64) as u32;
        }
        let r2 = radius * radius;
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let c = [i, j, k];
                    if self.is_occupied(c)
                        && (self.voxel_center(c) - center).norm_squared() <= r2
                    {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Flat binary export: origin as 3 f64, voxel_size f64, dims as 3 u32,
    /// then the occupancy bits packed x-fastest, LSB-first within each byte.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), WorldError> {
        for i in 0..3 {
            w.write_all(&to_f64(self.origin[i]).to_le_bytes())?;
        }
        w.write_all(&to_f64(self.voxel_size).to_le_bytes())?;
        for d in self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(self.occupied.as_raw_slice())?;
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), WorldError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, WorldError> {
        let mut f64buf = [0u8; 8];
        let mut origin = Vector3::zeros();
        for i in 0..3 {
            r.read_exact(&mut f64buf).map_err(|_| WorldError::BadGridFile("short header"))?;
            origin[i] = real::<S>(f64::from_le_bytes(f64buf));
        }
        r.read_exact(&mut f64buf).map_err(|_| WorldError::BadGridFile("short header"))?;
        let voxel_size = f64::from_le_bytes(f64buf);
        if !(voxel_size > 0.0) {
            return Err(WorldError::BadGridFile("non-positive voxel size"));
        }
        let mut dims = [0u32; 3];
        let mut u32buf = [0u8; 4];
        for d in dims.iter_mut() {
            r.read_exact(&mut u32buf).map_err(|_| WorldError::BadGridFile("short header"))?;
            *d = u32::from_le_bytes(u32buf);
        }
        let mut grid = Self::empty(origin, real::<S>(voxel_size), dims)?;
        let n_bytes = grid.occupied.len().div_ceil(8);
        let mut body = vec![0u8; n_bytes];
        r.read_exact(&mut body).map_err(|_| WorldError::BadGridFile("short body"))?;
        let n = grid.occupied.len();
        grid.occupied = BitVec::from_vec(body);
        grid.occupied.truncate(n);
        Ok(grid)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Build a grid whose bounds are the point AABB inflated by `padding`; a
/// voxel is occupied iff at least one point falls inside it.
pub fn build_grid<S: Real>(
    points: &[Vector3<S>],
    voxel_size: S,
    padding: S,
) -> Result<OccupancyGrid<S>, WorldError> {
    if voxel_size <= S::zero() {
        return Err(WorldError::BadVoxelSize(to_f64(voxel_size)));
    }
    let aabb = Aabb::from_points(points).ok_or(WorldError::EmptyPointCloud)?;
    let bounds = aabb.inflated(padding);
    let extent = bounds.extent();
    let mut dims = [0u32; 3];
    for i in 0..3 {
        // floor + 1 so a point exactly on the max face still has a voxel.
        dims[i] = to_f64((extent[i] / voxel_size).floor()).max(0.0) as u32 + 1;
    }
    let mut grid = OccupancyGrid::empty(bounds.min, voxel_size, dims)?;
    for &p in points {
        grid.mark_point(p);
    }
    Ok(grid)
}

/// Free-function form of [`OccupancyGrid::check_collision`].
pub fn check_collision<S: Real>(grid: &OccupancyGrid<S>, center: Vector3<S>, radius: S) -> bool {
    grid.check_collision(center, radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_single_voxel() {
        let grid = build_grid(&[Vector3::new(0.0, 0.0, 0.0)], 0.1, 0.0).unwrap();
        assert_eq!(grid.dims(), [1, 1, 1]);
        assert_eq!(grid.occupied_count(), 1);
    }

    #[test]
    fn two_points_ten_voxels_apart() {
        let pts = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        let grid = build_grid(&pts, 0.1, 0.0).unwrap();
        assert_eq!(grid.occupied_count(), 2);
        let a = grid.voxel_of(pts[0]).unwrap();
        let b = grid.voxel_of(pts[1]).unwrap();
        assert_eq!(b[0] - a[0], 10);
        assert!(grid.is_occupied(a) && grid.is_occupied(b));
    }

    #[test]
    fn binning_matches_floor_division_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vector3<f64>> = (0..10_000)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..2.0),
                )
            })
            .collect();
        let vs = 0.07;
        let grid = build_grid(&pts, vs, 0.05).unwrap();

        // Oracle: mark voxels found by direct floor division into a set.
        let origin = grid.origin();
        let mut expect = std::collections::HashSet::new();
        for p in &pts {
            let c = [
                ((p.x - origin.x) / vs).floor() as i64,
                ((p.y - origin.y) / vs).floor() as i64,
                ((p.z - origin.z) / vs).floor() as i64,
            ];
            expect.insert(c);
        }
        let dims = grid.dims();
        let mut got = 0usize;
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    if grid.is_occupied([i, j, k]) {
                        got += 1;
                        assert!(expect.contains(&[i as i64, j as i64, k as i64]));
                    }
                }
            }
        }
        assert_eq!(got, expect.len());
    }

    #[test]
    fn collision_basic() {
        let grid = build_grid(&[Vector3::new(1.0, 1.0, 1.0)], 0.1, 0.5).unwrap();
        // Occupied voxel center is within 0.05 of the point (0.1 voxels).
        assert!(grid.check_collision(Vector3::new(1.05, 1.0, 1.0), 0.2));
        assert!(!grid.check_collision(Vector3::new(2.5, 1.0, 1.0), 0.2));
        // Far outside the grid bounds entirely.
        assert!(!grid.check_collision(Vector3::new(50.0, 50.0, 50.0), 0.2));
    }

    #[test]
    fn empty_grid_never_collides() {
        let grid = OccupancyGrid::<f64>::empty(Vector3::zeros(), 0.1, [10, 10, 10]).unwrap();
        for p in [Vector3::zeros(), Vector3::new(0.5, 0.5, 0.5), Vector3::new(-1.0, 0.0, 0.0)] {
            assert!(!grid.check_collision(p, 0.3));
        }
    }

    #[test]
    fn collision_matches_full_scan_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = rng.gen_range(1..60);
            let pts: Vec<Vector3<f64>> = (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let grid = build_grid(&pts, rng.gen_range(0.05..0.3), rng.gen_range(0.0..0.3)).unwrap();
            let center = Vector3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            );
            let radius = rng.gen_range(0.05..0.8);

            // Oracle: exhaustive scan over every voxel.
            let dims = grid.dims();
            let mut expect = false;
            'outer: for k in 0..dims[2] {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        if grid.is_occupied([i, j, k])
                            && (grid.voxel_center([i, j, k]) - center).norm() <= radius
                        {
                            expect = true;
                            break 'outer;
                        }
                    }
                }
            }
            assert_eq!(grid.check_collision(center, radius), expect);
        }
    }

    #[test]
    fn collision_monotone_in_radius() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let pts: Vec<Vector3<f64>> = (0..30)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let grid = build_grid(&pts, 0.1, 0.2).unwrap();
        for _ in 0..50 {
            let c = Vector3::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
            let r = rng.gen_range(0.05..0.5);
            if grid.check_collision(c, r) {
                assert!(grid.check_collision(c, r * 1.5));
                assert!(grid.check_collision(c, r * 3.0));
            }
        }
    }

    #[test]
    fn export_round_trips() {
        let pts = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.35, 0.2, 0.9),
            Vector3::new(1.0, 0.4, 0.1),
        ];
        let grid = build_grid(&pts, 0.1, 0.05).unwrap();
        let mut buf = Vec::new();
        grid.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 44 + grid.voxel_count().div_ceil(8));
        let back = OccupancyGrid::<f64>::read_from(buf.as_slice()).unwrap();
        assert_eq!(grid, back);
    }

    #[test]
    fn empty_points_rejected() {
        assert!(matches!(
            build_grid::<f64>(&[], 0.1, 0.0),
            Err(WorldError::EmptyPointCloud)
        ));
        assert!(matches!(
            build_grid(&[Vector3::<f64>::zeros()], -0.1, 0.0),
            Err(WorldError::BadVoxelSize(_))
        ));
    }
}
