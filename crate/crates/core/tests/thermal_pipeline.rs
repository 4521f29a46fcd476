use proptest::prelude::*;
use thermoact::thermal::{
    apply_palette, luminance, normalize_temperature, quantize, thermal_to_pseudocolor,
    InfernoPalette, TempRange, ThermalFrame, INFERNO_RGB, SENSOR_HEIGHT, SENSOR_WIDTH,
};

fn reference_inferno() -> Vec<[f64; 3]> {
    include_str!("inferno_reference.txt")
        .lines()
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect()
}

#[test]
fn palette_matches_reference_lut() {
    let reference = reference_inferno();
    assert_eq!(reference.len(), 256);
    let mut off_round = Vec::new();
    for (i, (ours, theirs)) in INFERNO_RGB.iter().zip(&reference).enumerate() {
        for c in 0..3 {
            let exact = theirs[c] * 255.0;
            assert!(
                (ours[c] as f64 - exact).abs() < 1.0,
                "entry {i} channel {c}: {} vs {exact}",
                ours[c]
            );
            if ours[c] as f64 != exact.round() {
                off_round.push(i);
            }
        }
    }
    off_round.dedup();
    assert_eq!(off_round, vec![35, 39, 44]);
}

#[test]
fn palette_luminance_strict() {
    for i in 1..256 {
        assert!(luminance(INFERNO_RGB[i]) > luminance(INFERNO_RGB[i - 1]), "entry {i}");
    }
}

fn oracle_pixel(t: f64, palette: &InfernoPalette) -> [u8; 3] {
    // Independent path: exact clamp + half-up rounding written out longhand.
    let u = if t <= 20.0 {
        0.0
    } else if t >= 35.0 {
        1.0
    } else {
        (t - 20.0) / 15.0
    };
    let level = (u * 255.0 + 0.5) as usize;
    palette.entries()[level]
}

#[test]
fn uniform_hot_frame() {
    let p = InfernoPalette::standard();
    let f = ThermalFrame::uniform(SENSOR_WIDTH, SENSOR_HEIGHT, 35.0, 0.0).unwrap();
    let img = thermal_to_pseudocolor(&f, &TempRange::default(), &p).unwrap();
    for y in 0..256 {
        for x in 0..256 {
            let expected = if (32..224).contains(&y) { p.hottest() } else { p.coldest() };
            assert_eq!(img.pixel(x, y), expected, "({x},{y})");
        }
    }
}

#[test]
fn uniform_cold_frame_is_all_coldest() {
    let p = InfernoPalette::standard();
    let f = ThermalFrame::uniform(SENSOR_WIDTH, SENSOR_HEIGHT, 20.0, 0.0).unwrap();
    let img = thermal_to_pseudocolor(&f, &TempRange::default(), &p).unwrap();
    assert!(img.as_bytes().chunks(3).all(|px| px == p.coldest()));
}

#[test]
fn checkerboard_matches_oracle() {
    let p = InfernoPalette::standard();
    let f = ThermalFrame::from_fn(SENSOR_WIDTH, SENSOR_HEIGHT, 0.0, |x, y| {
        if (x + y) % 2 == 0 {
            20.0
        } else {
            35.0
        }
    })
    .unwrap();
    let img = thermal_to_pseudocolor(&f, &TempRange::default(), &p).unwrap();
    for y in 0..SENSOR_HEIGHT {
        for x in 0..SENSOR_WIDTH {
            let expected = oracle_pixel(f.get(x, y), &p);
            assert_eq!(img.pixel(x as u32, (y + 32) as u32), expected);
            let pure = if (x + y) % 2 == 0 { p.coldest() } else { p.hottest() };
            assert_eq!(expected, pure);
        }
    }
}

#[test]
fn gradient_frame_matches_oracle() {
    let p = InfernoPalette::standard();
    let f = ThermalFrame::from_fn(SENSOR_WIDTH, SENSOR_HEIGHT, 0.0, |x, y| {
        15.0 + 25.0 * (x as f64 / 255.0) + 0.01 * y as f64
    })
    .unwrap();
    let img = thermal_to_pseudocolor(&f, &TempRange::default(), &p).unwrap();
    for y in 0..SENSOR_HEIGHT {
        for x in 0..SENSOR_WIDTH {
            assert_eq!(img.pixel(x as u32, (y + 32) as u32), oracle_pixel(f.get(x, y), &p));
        }
    }
}

#[test]
fn pipeline_is_deterministic() {
    let p = InfernoPalette::standard();
    let f = ThermalFrame::from_fn(SENSOR_WIDTH, SENSOR_HEIGHT, 0.0, |x, y| {
        18.0 + ((x * 31 + y * 17) % 200) as f64 * 0.1
    })
    .unwrap();
    let a = thermal_to_pseudocolor(&f, &TempRange::default(), &p).unwrap();
    let b = thermal_to_pseudocolor(&f, &TempRange::default(), &p).unwrap();
    assert_eq!(a.as_bytes(), b.as_bytes());
}

proptest! {
    #[test]
    fn quantized_levels_are_monotone(a in -50.0f64..500.0, b in -50.0f64..500.0) {
        let r = TempRange::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let ql = quantize(normalize_temperature(lo, &r).unwrap()).unwrap();
        let qh = quantize(normalize_temperature(hi, &r).unwrap()).unwrap();
        prop_assert!(ql <= qh);
    }

    #[test]
    fn out_of_range_saturates(t in prop_oneof![-50.0f64..20.0, 35.0f64..500.0]) {
        let p = InfernoPalette::standard();
        let rgb = apply_palette(quantize(normalize_temperature(t, &TempRange::default()).unwrap()).unwrap(), &p);
        prop_assert!(rgb == p.coldest() || rgb == p.hottest());
        prop_assert_eq!(rgb == p.hottest(), t >= 35.0);
    }
}
