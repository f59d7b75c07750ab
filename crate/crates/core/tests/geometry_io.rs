use proptest::prelude::*;
use pvdeconv::chamfer::chamfer_kdtree;
use pvdeconv::geometry::{
    encode_obj, encode_ply_ascii, encode_ply_binary, encode_stl, load_mesh, normalize_mesh, normalize_points, parse_obj,
    parse_ply, parse_stl, primitives, read_pvpc, sample_uniform, write_pvpc, MeshFormat, TriangleMesh,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const CUBE_OBJ: &str = "\
v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1
f 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\nf 2 3 7\nf 2 7 6\nf 3 4 8\nf 3 8 7\nf 4 1 5\nf 4 5 8
";

#[test]
fn unit_cube_obj() {
    let m = parse_obj(CUBE_OBJ.as_bytes()).unwrap();
    assert_eq!(m.vertices().len(), 8);
    assert_eq!(m.faces().len(), 12);
    assert!((m.total_area() - 6.0).abs() < 1e-12);
}

#[test]
fn truncated_obj_is_an_error() {
    let cut = &CUBE_OBJ[..CUBE_OBJ.len() - 4];
    assert!(parse_obj(cut.as_bytes()).is_err());
}

#[test]
fn load_from_disk_in_every_format() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = primitives::octahedron();
    let files = [
        ("m.obj", encode_obj(&mesh).into_bytes()),
        ("m.ply", encode_ply_ascii(&mesh).into_bytes()),
        ("b.ply", encode_ply_binary(&mesh)),
        ("m.stl", encode_stl(&mesh)),
    ];
    for (name, bytes) in files {
        let path = dir.path().join(name);
        std::fs::write(&path, bytes).unwrap();
        let m = load_mesh(&path, MeshFormat::from_path(&path).unwrap()).unwrap();
        assert_eq!(m.faces().len(), 8, "{name}");
        assert!((m.total_area() - mesh.total_area()).abs() < 1e-6, "{name}");
    }
    let missing = load_mesh(&dir.path().join("none.obj"), MeshFormat::Obj).unwrap_err();
    assert!(missing.to_string().contains("none.obj"));
    assert!(MeshFormat::from_path(std::path::Path::new("x.step")).is_err());
}

fn two_face_mesh() -> TriangleMesh {
    // Face 0 has area 1, face 1 has area 3.
    TriangleMesh::new(
        vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 5.0], [6.0, 0.0, 5.0], [0.0, 1.0, 5.0]],
        vec![[0, 1, 2], [3, 4, 5]],
    )
    .unwrap()
}

#[test]
fn face_selection_follows_area() {
    let m = two_face_mesh();
    assert_eq!(m.areas(), &[1.0, 3.0]);
    let c = sample_uniform(&m, 40000, 11).unwrap();
    let on_second = c.coords().iter().filter(|p| p[2] == 5.0).count();
    // Binomial(40000, 0.75): sd ≈ 86.6, so ±500 is well past 3 sd.
    assert!((on_second as i64 - 30000).abs() <= 500, "{on_second}");
}

#[test]
fn sampling_is_deterministic() {
    let m = primitives::cube();
    let a = sample_uniform(&m, 500, 42).unwrap();
    let b = sample_uniform(&m, 500, 42).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_uniform(&m, 500, 43).unwrap());
}

#[test]
fn per_face_counts_pass_chi_square() {
    for name in ["tetrahedron", "pyramid", "cylinder"] {
        let m = primitives::by_name(name).unwrap();
        let f = m.faces().len();
        let n = 100 * f;
        let cloud = sample_uniform(&m, n, 7).unwrap();
        // Assign each point to the face whose plane and triangle contain it.
        let mut counts = vec![0usize; f];
        for p in cloud.coords() {
            let face = (0..f)
                .min_by(|&a, &b| dist_to_triangle(p, &m.triangle(a)).total_cmp(&dist_to_triangle(p, &m.triangle(b))))
                .unwrap();
            counts[face] += 1;
        }
        let total = m.total_area();
        let stat: f64 = counts
            .iter()
            .zip(m.areas())
            .map(|(&o, &a)| {
                let e = n as f64 * a / total;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        let p = 1.0 - ChiSquared::new((f - 1) as f64).unwrap().cdf(stat);
        assert!(p > 0.001, "{name}: chi2 {stat}, p {p}");
    }
}

/// Distance from `p` to the plane of `t`, infinite when `p` projects outside it.
fn dist_to_triangle(p: &[f64; 3], t: &[[f64; 3]; 3]) -> f64 {
    let sub = |a: &[f64; 3], b: &[f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (u, v, w) = (sub(&t[1], &t[0]), sub(&t[2], &t[0]), sub(p, &t[0]));
    let (uu, uv, vv, wu, wv) = (dot(&u, &u), dot(&u, &v), dot(&v, &v), dot(&w, &u), dot(&w, &v));
    let den = uv * uv - uu * vv;
    let s = (uv * wv - vv * wu) / den;
    let r = (uv * wu - uu * wv) / den;
    if s < -1e-9 || r < -1e-9 || s + r > 1.0 + 1e-9 {
        return f64::INFINITY;
    }
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    dot(&w, &n).abs() / dot(&n, &n).sqrt()
}

#[test]
fn normalize_roundtrip_and_idempotence() {
    let m = primitives::square_pyramid();
    let (norm, t) = normalize_mesh(&m).unwrap();
    for (orig, p) in m.vertices().iter().zip(norm.vertices()) {
        let back = t.invert(p);
        assert!((0..3).all(|a| (back[a] - orig[a]).abs() < 1e-12));
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
    let (_, again) = normalize_points(norm.vertices()).unwrap();
    assert!((again.scale - 1.0).abs() < 1e-12);
    assert!(again.translation.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn sampling_noise_floor_is_small_and_stable() {
    let (m, _) = normalize_mesh(&primitives::cube()).unwrap();
    let floors: Vec<f64> = (0..3)
        .map(|k| {
            let a = sample_uniform(&m, 10_000, 2 * k).unwrap();
            let b = sample_uniform(&m, 10_000, 2 * k + 1).unwrap();
            chamfer_kdtree(a.coords(), b.coords()).unwrap().normalized()
        })
        .collect();
    let mean = floors.iter().sum::<f64>() / 3.0;
    assert!(mean < 1e-3, "{floors:?}");
    assert!(floors.iter().all(|f| (f - mean).abs() < 0.1 * mean), "{floors:?}");
}

#[test]
fn pvpc_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.pvpc");
    let cloud = sample_uniform(&primitives::cube(), 100, 0).unwrap();
    write_pvpc(&path, &cloud).unwrap();
    let back = read_pvpc(&path).unwrap();
    for (a, b) in cloud.coords().iter().zip(back.coords()) {
        assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-7));
    }
}

proptest! {
    #[test]
    fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_obj(&bytes);
        let _ = parse_ply(&bytes);
        let _ = parse_stl(&bytes);
    }

    #[test]
    fn ply_header_mutations_never_panic(cut in 0usize..400, flip in 0usize..400, byte in any::<u8>()) {
        let mut bytes = encode_ply_binary(&primitives::cube());
        let i = flip % bytes.len();
        bytes[i] = byte;
        bytes.truncate(cut.max(1).min(bytes.len()));
        let _ = parse_ply(&bytes);
    }
}
