//! Parser/writer round trips checked against hand-assembled files.
//!
//! The `raw` module below builds NIfTI-1 byte buffers directly from field
//! offsets, independently of the library writer, so these tests catch
//! matching-but-wrong encode/decode pairs.

use neuroprep::nifti::{
    load_volume, parse_nifti_header, write_nifti, write_nifti_with, DataType, Endianness,
    Volume3D,
};
use proptest::prelude::*;

/// Test-only NIfTI-1 assembler working straight from the format's offsets.
mod raw {
    pub struct Spec<'a> {
        pub dim: [i16; 8],
        pub datatype_code: i16,
        pub bitpix: i16,
        pub scl_slope: f32,
        pub scl_inter: f32,
        pub big_endian: bool,
        /// Raw little-endian-independent voxel values, written per datatype.
        pub values: &'a [f64],
    }

    pub fn build(spec: &Spec) -> Vec<u8> {
        let elem = (spec.bitpix / 8) as usize;
        let mut out = vec![0u8; 352 + spec.values.len() * elem];
        put_i32(&mut out, 0, 348, spec.big_endian);
        for (i, &d) in spec.dim.iter().enumerate() {
            put_i16(&mut out, 40 + 2 * i, d, spec.big_endian);
        }
        put_i16(&mut out, 70, spec.datatype_code, spec.big_endian);
        put_i16(&mut out, 72, spec.bitpix, spec.big_endian);
        put_f32(&mut out, 108, 352.0, spec.big_endian);
        put_f32(&mut out, 112, spec.scl_slope, spec.big_endian);
        put_f32(&mut out, 116, spec.scl_inter, spec.big_endian);
        out[344..348].copy_from_slice(b"n+1\0");
        for (i, &v) in spec.values.iter().enumerate() {
            let at = 352 + i * elem;
            match spec.datatype_code {
                2 => out[at] = v as u8,
                4 => put_i16(&mut out, at, v as i16, spec.big_endian),
                8 => put_i32(&mut out, at, v as i32, spec.big_endian),
                16 => put_f32(&mut out, at, v as f32, spec.big_endian),
                64 => put_f64(&mut out, at, v, spec.big_endian),
                other => panic!("unsupported datatype {other}"),
            }
        }
        out
    }

    fn put_i16(buf: &mut [u8], at: usize, v: i16, be: bool) {
        let b = if be { v.to_be_bytes() } else { v.to_le_bytes() };
        buf[at..at + 2].copy_from_slice(&b);
    }

    fn put_i32(buf: &mut [u8], at: usize, v: i32, be: bool) {
        let b = if be { v.to_be_bytes() } else { v.to_le_bytes() };
        buf[at..at + 4].copy_from_slice(&b);
    }

    fn put_f32(buf: &mut [u8], at: usize, v: f32, be: bool) {
        let b = if be { v.to_be_bytes() } else { v.to_le_bytes() };
        buf[at..at + 4].copy_from_slice(&b);
    }

    fn put_f64(buf: &mut [u8], at: usize, v: f64, be: bool) {
        let b = if be { v.to_be_bytes() } else { v.to_le_bytes() };
        buf[at..at + 8].copy_from_slice(&b);
    }
}

fn spec_3d(values: &[f64], big_endian: bool) -> raw::Spec<'_> {
    raw::Spec {
        dim: [3, 4, 4, 3, 1, 1, 1, 1],
        datatype_code: 16,
        bitpix: 32,
        scl_slope: 0.0,
        scl_inter: 0.0,
        big_endian,
        values,
    }
}

#[test]
fn parses_hand_assembled_little_endian_file() {
    let values: Vec<f64> = (0..48).map(f64::from).collect();
    let bytes = raw::build(&spec_3d(&values, false));
    let header = parse_nifti_header(&bytes).unwrap();
    assert_eq!((header.nx(), header.ny(), header.nz()), (4, 4, 3));
    assert_eq!(header.datatype, DataType::F32);
    assert_eq!(header.endianness, Endianness::Little);
}

#[test]
fn byte_swapped_twin_parses_to_identical_volume() {
    let values: Vec<f64> = (0..48).map(|i| f64::from(i) * 0.25).collect();
    let le = load_volume(&raw::build(&spec_3d(&values, false))).unwrap();
    let be = load_volume(&raw::build(&spec_3d(&values, true))).unwrap();
    assert_eq!(le, be);
    assert_eq!(le[0].voxels(), &values[..]);
}

#[test]
fn four_dimensional_file_unrolls_into_volumes() {
    let values: Vec<f64> = (0..96).map(f64::from).collect();
    let bytes = raw::build(&raw::Spec {
        dim: [4, 4, 4, 3, 2, 1, 1, 1],
        datatype_code: 16,
        bitpix: 32,
        scl_slope: 0.0,
        scl_inter: 0.0,
        big_endian: false,
        values: &values,
    });
    let volumes = load_volume(&bytes).unwrap();
    assert_eq!(volumes.len(), 2);
    for v in &volumes {
        assert_eq!((v.nx(), v.ny(), v.nz()), (4, 4, 3));
    }
    assert_eq!(volumes[0].voxels(), &values[..48]);
    assert_eq!(volumes[1].voxels(), &values[48..]);
}

#[test]
fn scaling_from_hand_assembled_file() {
    let bytes = raw::build(&raw::Spec {
        dim: [3, 2, 1, 1, 1, 1, 1, 1],
        datatype_code: 4,
        bitpix: 16,
        scl_slope: 2.0,
        scl_inter: 1.0,
        big_endian: false,
        values: &[5.0, -3.0],
    });
    let vols = load_volume(&bytes).unwrap();
    assert_eq!(vols[0].voxels(), &[11.0, -5.0]);
    assert_eq!(vols[0].source_scaling(), (2.0, 1.0));
}

fn dims_and_values() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>)> {
    (1usize..5, 1usize..5, 1usize..4).prop_flat_map(|(nx, ny, nz)| {
        let n = nx * ny * nz;
        (
            Just(nx),
            Just(ny),
            Just(nz),
            // Integer-valued voxels in u8 range survive every datatype
            // exactly, which makes "identity up to quantization" testable
            // as plain equality.
            prop::collection::vec((0u8..=255).prop_map(f64::from), n..=n),
        )
    })
}

proptest! {
    #[test]
    fn round_trip_is_identity_for_every_datatype(
        (nx, ny, nz, values) in dims_and_values(),
    ) {
        let vol = Volume3D::new(nx, ny, nz, values).unwrap();
        for datatype in DataType::ALL {
            let bytes = write_nifti(&vol, datatype).unwrap();
            let header = parse_nifti_header(&bytes).unwrap();
            prop_assert_eq!(header.datatype, datatype);
            prop_assert_eq!((header.nx(), header.ny(), header.nz()), (nx, ny, nz));
            let loaded = load_volume(&bytes).unwrap();
            prop_assert_eq!(loaded.len(), 1);
            prop_assert_eq!(loaded[0].voxels(), vol.voxels());
        }
    }

    #[test]
    fn fractional_values_round_trip_within_quantization(
        (nx, ny, nz, mut values) in dims_and_values(),
    ) {
        for (i, v) in values.iter_mut().enumerate() {
            // Stay below 255.5 so the u8 write cannot overflow on rounding.
            *v = (*v).min(250.0) + (i % 10) as f64 / 10.0;
        }
        let vol = Volume3D::new(nx, ny, nz, values).unwrap();
        for datatype in [DataType::U8, DataType::I16, DataType::I32] {
            let loaded = load_volume(&write_nifti(&vol, datatype).unwrap()).unwrap();
            for (&out, &orig) in loaded[0].voxels().iter().zip(vol.voxels()) {
                prop_assert!((out - orig).abs() <= 0.5);
                prop_assert_eq!(out, out.round());
            }
        }
        // f32 quantizes to the nearest representable; f64 is lossless.
        let loaded = load_volume(&write_nifti(&vol, DataType::F32).unwrap()).unwrap();
        for (&out, &orig) in loaded[0].voxels().iter().zip(vol.voxels()) {
            prop_assert_eq!(out, orig as f32 as f64);
        }
        let loaded = load_volume(&write_nifti(&vol, DataType::F64).unwrap()).unwrap();
        prop_assert_eq!(loaded[0].voxels(), vol.voxels());
    }

    #[test]
    fn big_endian_writer_round_trips(
        (nx, ny, nz, values) in dims_and_values(),
    ) {
        let vol = Volume3D::new(nx, ny, nz, values).unwrap();
        let le = write_nifti_with(&vol, DataType::I16, Endianness::Little).unwrap();
        let be = write_nifti_with(&vol, DataType::I16, Endianness::Big).unwrap();
        prop_assert_ne!(&le, &be);
        prop_assert_eq!(load_volume(&le).unwrap(), load_volume(&be).unwrap());
    }
}
