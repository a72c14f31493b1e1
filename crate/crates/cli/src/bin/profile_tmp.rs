use std::time::Instant;
use mirage_core::render::{render_image, CameraIntrinsics, RenderOptions};
use mirage_core::geom::Pose6D;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    // Reuse the bench synthetic scene via the library path used by `bench`.
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50000);
    let scene = mirage_bench_scene(n);
    let k = CameraIntrinsics::<f32>::new(240.0, 240.0, 159.5, 119.5, 320, 240, 0.05, 60.0).unwrap();
    let mut opts = RenderOptions::<f32>::default();
    if std::env::var("FAT_SKIP").is_ok() { opts.alpha_skip = 0.05; }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut total = 0.0;
    let frames = 60;
    let mut worst = 0.0f64;
    for _ in 0..frames {
        let p = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-2.2..2.2), rng.gen_range(0.4..2.4));
        let yaw = rng.gen_range(0.0..6.28);
        let pose = Pose6D::new(p, UnitQuaternion::from_euler_angles(0.0, rng.gen_range(-0.3..0.3), yaw));
        let cam = pose.isometry_cast::<f32>().inverse();
        let tp0 = Instant::now();
        let mut count = 0usize;
        let mut area = 0.0f64;
        for g in scene.gaussians() {
            if let Some(s) = mirage_core::render::project_gaussian(g, &cam, &k, &opts) {
                count += 1;
                let r = s.radius as f64;
                let w = (2.0*r).min(320.0);
                let h = (2.0*r).min(240.0);
                area += w*h;
                std::hint::black_box(&s);
            }
        }
        let proj_t = tp0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let img = render_image(&scene, &cam, &k, &opts);
        let dt = t0.elapsed().as_secs_f64();
        println!("frame: {:.2} ms total, proj-only {:.2} ms, {} visible, clamped fill {:.1} Mpx", dt*1e3, proj_t*1e3, count, area/1e6);
        total += dt;
        if dt > worst { worst = dt; }
        std::hint::black_box(&img);
    }
    println!("{} gaussians: mean {:.2} ms, worst {:.2} ms", n, total / frames as f64 * 1e3, worst * 1e3);
}

fn mirage_bench_scene(n: usize) -> mirage_core::SplatSceneF32 {
    use mirage_core::scene::{Gaussian3D, SplatScene, SH_COEFFS};
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (hx, hy, hz) = (4.0f32, 3.0f32, 1.5f32);
    let n_wall = n * 7 / 10;
    let mut gaussians = Vec::with_capacity(n.max(1));
    for i in 0..n.max(1) {
        let mean = if i < n_wall {
            let face = rng.gen_range(0..6);
            let u = rng.gen_range(-1.0f32..1.0);
            let v = rng.gen_range(-1.0f32..1.0);
            let d = rng.gen_range(-0.03f32..0.03);
            match face {
                0 => Vector3::new(hx + d, u * hy, (v + 1.0) * hz),
                1 => Vector3::new(-hx + d, u * hy, (v + 1.0) * hz),
                2 => Vector3::new(u * hx, hy + d, (v + 1.0) * hz),
                3 => Vector3::new(u * hx, -hy + d, (v + 1.0) * hz),
                4 => Vector3::new(u * hx, v * hy, d),
                _ => Vector3::new(u * hx, v * hy, 2.0 * hz + d),
            }
        } else {
            Vector3::new(rng.gen_range(-hx*0.7..hx*0.7), rng.gen_range(-hy*0.7..hy*0.7), rng.gen_range(0.1..2.0*hz*0.8))
        };
        let axis = nalgebra::Unit::new_normalize(Vector3::new(rng.gen_range(-1.0f32..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let mut sh = [Vector3::zeros(); SH_COEFFS];
        sh[0] = Vector3::new(rng.gen_range(-0.8f32..0.8), rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
        for c in sh.iter_mut().skip(1).take(3) {
            *c = Vector3::new(rng.gen_range(-0.1f32..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        }
        gaussians.push(Gaussian3D {
            mean,
            scale: Vector3::new(rng.gen_range(0.02f32..0.08), rng.gen_range(0.02..0.08), rng.gen_range(0.02..0.08)),
            rotation: UnitQuaternion::from_axis_angle(&axis, rng.gen_range(-3.1..3.1)),
            opacity: rng.gen_range(0.6f32..0.98),
            sh,
        });
    }
    SplatScene::new(gaussians).unwrap()
}
