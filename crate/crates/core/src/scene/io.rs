//! Binary PLY reader/writer for splat scenes.
//!
//! Layout: `format binary_little_endian 1.0`, one `vertex` element whose
//! properties are 62 little-endian float32 values per record, in this order:
//! `x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::num::Real;

use super::{Gaussian3D, SplatScene, StoredGaussian};

/// Expected vertex property names, in file order.
pub const VERTEX_PROPERTIES: [&str; 62] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "f_rest_0", "f_rest_1",
    "f_rest_2", "f_rest_3", "f_rest_4", "f_rest_5", "f_rest_6", "f_rest_7", "f_rest_8",
    "f_rest_9", "f_rest_10", "f_rest_11", "f_rest_12", "f_rest_13", "f_rest_14", "f_rest_15",
    "f_rest_16", "f_rest_17", "f_rest_18", "f_rest_19", "f_rest_20", "f_rest_21", "f_rest_22",
    "f_rest_23", "f_rest_24", "f_rest_25", "f_rest_26", "f_rest_27", "f_rest_28", "f_rest_29",
    "f_rest_30", "f_rest_31", "f_rest_32", "f_rest_33", "f_rest_34", "f_rest_35", "f_rest_36",
    "f_rest_37", "f_rest_38", "f_rest_39", "f_rest_40", "f_rest_41", "f_rest_42", "f_rest_43",
    "f_rest_44", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

const FLOATS_PER_RECORD: usize = 62;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a PLY file (missing 'ply' magic line)")]
    NotPly,
    #[error("unsupported PLY format {found:?}; expected binary_little_endian 1.0")]
    UnsupportedFormat { found: String },
    #[error("missing vertex element declaration")]
    MissingVertexElement,
    #[error("header missing or misordered property {name:?} (slot {index})")]
    MissingProperty { name: &'static str, index: usize },
    #[error("unexpected extra property {found:?} after the {expected} known properties")]
    ExtraProperty { found: String, expected: usize },
    #[error("property {name:?} has type {found:?}; expected float")]
    PropertyType { name: String, found: String },
    #[error("payload truncated at byte offset {offset} (record {record} of {total})")]
    Truncated { offset: usize, record: usize, total: usize },
    #[error("non-finite value in field {field:?} of record {record}")]
    NonFinite { field: &'static str, record: usize },
    #[error("scene contains no Gaussians")]
    Empty,
}

/// Parse a scene file and apply activations.
///
/// Postconditions: record count equals the header's vertex count, all values
/// finite, scales exponentiated, opacities squashed, rotations normalized.
pub fn load_scene<S: Real>(path: impl AsRef<Path>) -> Result<SplatScene<S>, SceneError> {
    let file = File::open(path.as_ref())?;
    let mut reader = BufReader::new(file);
    let count = read_header(&mut reader)?;

    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let stored = parse_records(&payload, count)?;

    let gaussians: Vec<Gaussian3D<S>> = stored.iter().map(StoredGaussian::activate).collect();
    SplatScene::new(gaussians)
}

/// Write a scene in the exact file layout, inverting the activations
/// (log-scale, logit-opacity). The fixture writer for round-trip tests.
pub fn write_scene<S: Real>(path: impl AsRef<Path>, scene: &SplatScene<S>) -> Result<(), SceneError> {
    let stored: Vec<StoredGaussian> = scene.gaussians().iter().map(StoredGaussian::deactivate).collect();
    write_stored(path, &stored)
}

/// Write pre-activation records directly. Used by tests that need exact
/// control over stored values.
pub fn write_stored(path: impl AsRef<Path>, records: &[StoredGaussian]) -> Result<(), SceneError> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    write!(w, "ply\nformat binary_little_endian 1.0\nelement vertex {}\n", records.len())?;
    for name in VERTEX_PROPERTIES {
        writeln!(w, "property float {name}")?;
    }
    writeln!(w, "end_header")?;
    for rec in records {
        let mut buf = [0f32; FLOATS_PER_RECORD];
        buf[0..3].copy_from_slice(&rec.position);
        buf[3..6].copy_from_slice(&rec.normal);
        buf[6..9].copy_from_slice(&rec.f_dc);
        buf[9..54].copy_from_slice(&rec.f_rest);
        buf[54] = rec.opacity;
        buf[55..58].copy_from_slice(&rec.scale);
        buf[58..62].copy_from_slice(&rec.rot);
        for v in buf {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Returns the declared vertex count, leaving the reader at the start of the
/// binary payload.
fn read_header<R: BufRead>(reader: &mut R) -> Result<usize, SceneError> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(SceneError::NotPly);
    }

    let mut count: Option<usize> = None;
    let mut format_seen = false;
    let mut prop_index = 0usize;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(SceneError::MissingVertexElement);
        }
        let trimmed = line.trim_end();
        let mut parts = trimmed.split_whitespace();
        match parts.next() {
            Some("comment") => continue,
            Some("format") => {
                let rest: Vec<&str> = parts.collect();
                if rest != ["binary_little_endian", "1.0"] {
                    return Err(SceneError::UnsupportedFormat { found: rest.join(" ") });
                }
                format_seen = true;
            }
            Some("element") => {
                let name = parts.next().unwrap_or("");
                let n = parts.next().and_then(|s| s.parse::<usize>().ok());
                if name != "vertex" || n.is_none() {
                    return Err(SceneError::MissingVertexElement);
                }
                count = n;
            }
            Some("property") => {
                let ty = parts.next().unwrap_or("").to_string();
                let name = parts.next().unwrap_or("").to_string();
                if prop_index >= VERTEX_PROPERTIES.len() {
                    return Err(SceneError::ExtraProperty {
                        found: name,
                        expected: VERTEX_PROPERTIES.len(),
                    });
                }
                let expected = VERTEX_PROPERTIES[prop_index];
                if name != expected {
                    return Err(SceneError::MissingProperty { name: expected, index: prop_index });
                }
                if ty != "float" {
                    return Err(SceneError::PropertyType { name, found: ty });
                }
                prop_index += 1;
            }
            Some("end_header") => break,
            _ => continue,
        }
    }
    if !format_seen {
        return Err(SceneError::UnsupportedFormat { found: "<none>".into() });
    }
    let count = count.ok_or(SceneError::MissingVertexElement)?;
    if prop_index < VERTEX_PROPERTIES.len() {
        return Err(SceneError::MissingProperty {
            name: VERTEX_PROPERTIES[prop_index],
            index: prop_index,
        });
    }
    Ok(count)
}

fn parse_records(payload: &[u8], count: usize) -> Result<Vec<StoredGaussian>, SceneError> {
    let record_bytes = FLOATS_PER_RECORD * 4;
    let needed = count * record_bytes;
    if payload.len() < needed {
        return Err(SceneError::Truncated {
            offset: payload.len(),
            record: payload.len() / record_bytes,
            total: count,
        });
    }

    let mut records = Vec::with_capacity(count);
    for rec_idx in 0..count {
        let base = rec_idx * record_bytes;
        let mut vals = [0f32; FLOATS_PER_RECORD];
        for (i, v) in vals.iter_mut().enumerate() {
            let off = base + i * 4;
            let bytes: [u8; 4] = payload[off..off + 4].try_into().unwrap();
            *v = f32::from_le_bytes(bytes);
            if !v.is_finite() {
                return Err(SceneError::NonFinite { field: VERTEX_PROPERTIES[i], record: rec_idx });
            }
        }
        records.push(StoredGaussian {
            position: [vals[0], vals[1], vals[2]],
            normal: [vals[3], vals[4], vals[5]],
            f_dc: [vals[6], vals[7], vals[8]],
            f_rest: vals[9..54].try_into().unwrap(),
            opacity: vals[54],
            scale: [vals[55], vals[56], vals[57]],
            rot: [vals[58], vals[59], vals[60], vals[61]],
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use tempfile::tempdir;

    fn stored_with(scale: [f32; 3], opacity: f32) -> StoredGaussian {
        StoredGaussian {
            position: [0.0, 0.0, 0.0],
            normal: [0.0; 3],
            f_dc: [0.1, 0.2, 0.3],
            f_rest: [0.0; 45],
            opacity,
            scale,
            rot: [1.0, 0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn activations_applied_on_load() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.ply");
        write_stored(&path, &[stored_with([0.0, 0.0, 0.0], 0.0)]).unwrap();
        let scene: SplatScene<f64> = load_scene(&path).unwrap();
        assert_eq!(scene.len(), 1);
        let g = &scene.gaussians()[0];
        // exp(0) = 1, sigmoid(0) = 0.5
        approx::assert_relative_eq!(g.scale, Vector3::new(1.0, 1.0, 1.0), epsilon = 1e-12);
        approx::assert_relative_eq!(g.opacity, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn count_mismatch_is_truncation_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.ply");
        let records: Vec<StoredGaussian> =
            (0..99).map(|_| stored_with([0.0; 3], 0.0)).collect();
        // Claim 100 records in the header but write 99.
        {
            use std::io::Write as _;
            write_stored(&path, &records).unwrap();
            let contents = std::fs::read(&path).unwrap();
            let header_end = contents.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
            let header = String::from_utf8(contents[..header_end].to_vec()).unwrap();
            let patched = header.replace("element vertex 99", "element vertex 100");
            let mut f = std::fs::File::create(&path).unwrap();
            f.write_all(patched.as_bytes()).unwrap();
            f.write_all(&contents[header_end..]).unwrap();
        }
        let err = load_scene::<f64>(&path).unwrap_err();
        match err {
            SceneError::Truncated { record, total, offset } => {
                assert_eq!(total, 100);
                assert_eq!(record, 99);
                assert_eq!(offset, 99 * 62 * 4);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn missing_property_named_in_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        let mut header = String::from("ply\nformat binary_little_endian 1.0\nelement vertex 0\n");
        for name in VERTEX_PROPERTIES.iter().filter(|n| **n != "opacity") {
            header.push_str(&format!("property float {name}\n"));
        }
        header.push_str("end_header\n");
        std::fs::write(&path, header).unwrap();
        let err = load_scene::<f64>(&path).unwrap_err();
        match err {
            SceneError::MissingProperty { name, .. } => assert_eq!(name, "opacity"),
            other => panic!("expected missing property, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_value_names_record() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nan.ply");
        let mut rec = stored_with([0.0; 3], 0.0);
        rec.position[1] = f32::NAN;
        write_stored(&path, &[stored_with([0.0; 3], 0.0), rec]).unwrap();
        let err = load_scene::<f64>(&path).unwrap_err();
        match err {
            SceneError::NonFinite { field, record } => {
                assert_eq!(field, "y");
                assert_eq!(record, 1);
            }
            other => panic!("expected non-finite, got {other:?}"),
        }
    }

    #[test]
    fn write_load_round_trip_within_tolerance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let dir = tempdir().unwrap();
        let path = dir.path().join("three.ply");
        let records: Vec<StoredGaussian> = (0..3)
            .map(|_| {
                let mut f_rest = [0f32; 45];
                for v in f_rest.iter_mut() {
                    *v = rng.gen_range(-0.5..0.5);
                }
                StoredGaussian {
                    position: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                    normal: [0.0; 3],
                    f_dc: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    f_rest,
                    opacity: rng.gen_range(-3.0..3.0),
                    scale: [rng.gen_range(-4.0..0.0), rng.gen_range(-4.0..0.0), rng.gen_range(-4.0..0.0)],
                    rot: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.1..1.0)],
                }
            })
            .collect();
        write_stored(&path, &records).unwrap();
        let scene: SplatScene<f64> = load_scene(&path).unwrap();

        let path2 = dir.path().join("three_rt.ply");
        write_scene(&path2, &scene).unwrap();
        let scene2: SplatScene<f64> = load_scene(&path2).unwrap();

        assert_eq!(scene.len(), scene2.len());
        for (a, b) in scene.gaussians().iter().zip(scene2.gaussians()) {
            approx::assert_relative_eq!(a.mean, b.mean, epsilon = 1e-6);
            approx::assert_relative_eq!(a.scale, b.scale, epsilon = 1e-6, max_relative = 1e-5);
            approx::assert_relative_eq!(a.opacity, b.opacity, epsilon = 1e-6);
            let dq = a.rotation.angle_to(&b.rotation);
            assert!(dq < 1e-6, "rotation drifted by {dq}");
            for i in 0..16 {
                approx::assert_relative_eq!(a.sh[i], b.sh[i], epsilon = 1e-6);
            }
        }
    }
}
