//! Pins the determinism layer to committed text vectors so a regression or
//! a platform difference shows up as a byte diff. Regenerate the files by
//! running these tests with CONVEVO_WRITE_CONFORMANCE=1 after a deliberate
//! change.

use convevo::determinism::{
    fisher_yates_shuffle, hexfloat_decode, hexfloat_encode, portable_exp, PortableRng,
};
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

fn vector_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("conformance")
        .join(name)
}

/// Compares generated content against the committed file, or rewrites the
/// file when CONVEVO_WRITE_CONFORMANCE is set.
fn check_or_write(name: &str, content: &str) {
    let path = vector_path(name);
    if std::env::var_os("CONVEVO_WRITE_CONFORMANCE").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, content).unwrap();
        eprintln!("wrote {}", path.display());
        return;
    }
    let committed = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{} missing ({e}); regenerate with CONVEVO_WRITE_CONFORMANCE=1", path.display()));
    assert_eq!(committed, content, "{name} drifted from the generator");
}

fn rng_vector() -> String {
    let mut out = String::from("minstd_rand0 seed 1\n");
    let mut rng = PortableRng::new(1);
    for i in 1..=10_000u32 {
        let value = rng.next();
        if i <= 10 || i == 10_000 {
            writeln!(out, "{i} {value}").unwrap();
        }
    }
    out
}

fn shuffle_vector() -> String {
    let mut out = String::new();
    for (seed, len) in [(42u64, 10usize), (1, 16), (2026, 7)] {
        let mut rng = PortableRng::new(seed);
        let mut items: Vec<u32> = (0..len as u32).collect();
        fisher_yates_shuffle(&mut items, &mut rng);
        writeln!(out, "fisher_yates seed {seed} items {len}").unwrap();
        let rendered: Vec<String> = items.iter().map(u32::to_string).collect();
        writeln!(out, "{}", rendered.join(" ")).unwrap();
    }
    out
}

fn exp_vector() -> String {
    let mut out = String::from("portable_exp\n");
    // -20 to 20 in steps of a quarter: every value is exactly representable,
    // so the grid itself cannot drift.
    for q in -80..=80i32 {
        let x = f64::from(q) / 4.0;
        writeln!(
            out,
            "{} {}",
            hexfloat_encode(x).unwrap(),
            hexfloat_encode(portable_exp(x)).unwrap()
        )
        .unwrap();
    }
    out
}

fn hexfloat_vector() -> String {
    let mut bits: Vec<u64> = vec![
        0x0000000000000000, // +0
        0x8000000000000000, // -0
        0x0000000000000001, // smallest subnormal
        0x000FFFFFFFFFFFFF, // largest subnormal
        0x0010000000000000, // smallest normal
        0x7FEFFFFFFFFFFFFF, // largest finite
        0x3FF0000000000000, // 1.0
        0xBFF8000000000000, // -1.5
        0x400921FB54442D18, // nearest double to pi
        0x3FB999999999999A, // nearest double to 0.1
    ];
    let mut rng = PortableRng::new(181);
    for i in 0..20u64 {
        let mut b = (rng.next() << 33) ^ (rng.next() << 2) ^ i;
        if (b >> 52) & 0x7FF == 0x7FF {
            b &= !(1u64 << 62); // force a finite exponent
        }
        bits.push(b);
    }
    let mut out = String::from("hexfloat bits text\n");
    for b in bits {
        writeln!(out, "{b:016X} {}", hexfloat_encode(f64::from_bits(b)).unwrap()).unwrap();
    }
    out
}

#[test]
fn rng_vector_is_pinned() {
    check_or_write("rng.txt", &rng_vector());
}

#[test]
fn shuffle_vector_is_pinned() {
    check_or_write("shuffle.txt", &shuffle_vector());
}

#[test]
fn exp_vector_is_pinned() {
    check_or_write("exp.txt", &exp_vector());
}

#[test]
fn hexfloat_vector_is_pinned() {
    check_or_write("hexfloat.txt", &hexfloat_vector());
}

/// The rng file must agree with the Lehmer recurrence computed in exact
/// 128-bit arithmetic, independent of the crate's generator.
#[test]
fn rng_vector_matches_the_exact_recurrence() {
    let text = fs::read_to_string(vector_path("rng.txt")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("minstd_rand0 seed 1"));
    let mut state: u128 = 1;
    let mut index = 0u32;
    for line in lines {
        let (i, value) = line.split_once(' ').unwrap();
        let i: u32 = i.parse().unwrap();
        while index < i {
            state = (16_807 * state) % 2_147_483_647;
            index += 1;
        }
        assert_eq!(value.parse::<u128>().unwrap(), state, "index {i}");
    }
    assert_eq!(index, 10_000, "the file pins the 10,000th value");
}

/// Every shuffle line must be a permutation of 0..n.
#[test]
fn shuffle_vector_lines_are_permutations() {
    let text = fs::read_to_string(vector_path("shuffle.txt")).unwrap();
    let mut lines = text.lines();
    while let Some(header) = lines.next() {
        let len: usize = header.rsplit(' ').next().unwrap().parse().unwrap();
        let mut items: Vec<u32> = lines
            .next()
            .unwrap()
            .split(' ')
            .map(|t| t.parse().unwrap())
            .collect();
        items.sort_unstable();
        assert_eq!(items, (0..len as u32).collect::<Vec<_>>(), "{header}");
    }
}

/// The exp file must stay within 1e-12 relative of the platform libm, which
/// serves as the high-precision reference on this grid.
#[test]
fn exp_vector_matches_a_reference_within_tolerance() {
    let text = fs::read_to_string(vector_path("exp.txt")).unwrap();
    for line in text.lines().skip(1) {
        let (x, y) = line.split_once(' ').unwrap();
        let x = hexfloat_decode(x).unwrap();
        let y = hexfloat_decode(y).unwrap();
        let reference = x.exp();
        assert!(
            ((y - reference) / reference).abs() < 1e-12,
            "exp({x}) = {y} strays from reference {reference}"
        );
    }
}

/// Every hexfloat line must decode to its exact bit pattern and re-encode
/// to the identical text.
#[test]
fn hexfloat_vector_round_trips_bit_exactly() {
    let text = fs::read_to_string(vector_path("hexfloat.txt")).unwrap();
    for line in text.lines().skip(1) {
        let (bits, encoded) = line.split_once(' ').unwrap();
        let bits = u64::from_str_radix(bits, 16).unwrap();
        assert_eq!(hexfloat_decode(encoded).unwrap().to_bits(), bits, "{line}");
        assert_eq!(hexfloat_encode(f64::from_bits(bits)).unwrap(), encoded, "{line}");
    }
}
