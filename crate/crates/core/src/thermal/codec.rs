//! Lossless-enough raw storage: 16-bit grayscale PNG holding centi-degrees
//! above −50 °C. The frame timestamp rides along in a `tEXt` chunk.

use std::io::Cursor;

use super::{ThermalError, ThermalFrame, SENSOR_HEIGHT, SENSOR_WIDTH};

pub const RAW_OFFSET_C: f64 = 50.0;
pub const RAW_SCALE: f64 = 100.0;

const TIMESTAMP_KEY: &str = "timestamp";

fn format_err(e: impl std::fmt::Display) -> ThermalError {
    ThermalError::Format(e.to_string())
}

/// Stored sample for a temperature.
pub fn raw_value(temp: f64) -> u16 {
    ((temp + RAW_OFFSET_C) * RAW_SCALE).round() as u16
}

pub fn encode_raw(frame: &ThermalFrame) -> Result<Vec<u8>, ThermalError> {
    frame.validate()?;
    if frame.width() != SENSOR_WIDTH || frame.height() != SENSOR_HEIGHT {
        return Err(ThermalError::InvalidInput(format!(
            "raw frames are {SENSOR_WIDTH}x{SENSOR_HEIGHT}, got {}x{}",
            frame.width(),
            frame.height()
        )));
    }
    let mut data = Vec::with_capacity(frame.temps().len() * 2);
    for &t in frame.temps() {
        data.extend_from_slice(&raw_value(t).to_be_bytes());
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, frame.width() as u32, frame.height() as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Sixteen);
        encoder
            .add_text_chunk(TIMESTAMP_KEY.to_string(), frame.timestamp().to_string())
            .map_err(format_err)?;
        let mut writer = encoder.write_header().map_err(format_err)?;
        writer.write_image_data(&data).map_err(format_err)?;
        writer.finish().map_err(format_err)?;
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<ThermalFrame, ThermalError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(format_err)?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Sixteen || info.color_type != png::ColorType::Grayscale {
        return Err(ThermalError::Format(format!(
            "expected 16-bit grayscale, got {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    if width != SENSOR_WIDTH || height != SENSOR_HEIGHT {
        return Err(ThermalError::Format(format!(
            "expected {SENSOR_WIDTH}x{SENSOR_HEIGHT}, got {width}x{height}"
        )));
    }
    let timestamp = info
        .uncompressed_latin1_text
        .iter()
        .find(|c| c.keyword == TIMESTAMP_KEY)
        .map(|c| c.text.parse::<f64>())
        .transpose()
        .map_err(|e| ThermalError::Format(format!("bad timestamp chunk: {e}")))?
        .unwrap_or(0.0);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ThermalError::Format("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame_info = reader.next_frame(&mut buf).map_err(format_err)?;
    let buf = &buf[..frame_info.buffer_size()];
    if buf.len() != width * height * 2 {
        return Err(ThermalError::Format("truncated pixel data".into()));
    }
    let temps = buf
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / RAW_SCALE - RAW_OFFSET_C)
        .collect();
    ThermalFrame::new(width, height, temps, timestamp).map_err(|e| match e {
        ThermalError::InvalidInput(m) => ThermalError::Format(m),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stored_values() {
        assert_eq!(raw_value(21.5), 7150);
        assert_eq!(raw_value(-50.0), 0);
        assert_eq!(raw_value(500.0), 55000);
    }

    #[test]
    fn rejects_garbage_and_wrong_depth() {
        assert!(matches!(decode_raw(b"not a png"), Err(ThermalError::Format(_))));

        let img = image::GrayImage::from_pixel(256, 192, image::Luma([7]));
        let mut bytes = Vec::new();
        img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
            .unwrap();
        assert!(matches!(decode_raw(&bytes), Err(ThermalError::Format(_))));
    }

    #[test]
    fn rejects_wrong_dimensions() {
        let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_pixel(64, 48, image::Luma([7150]));
        let mut bytes = Vec::new();
        img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
            .unwrap();
        let err = decode_raw(&bytes).unwrap_err();
        assert!(err.to_string().contains("64x48"));
    }

    #[test]
    fn keeps_timestamp() {
        let f = ThermalFrame::uniform(SENSOR_WIDTH, SENSOR_HEIGHT, 21.5, 12.25).unwrap();
        let back = decode_raw(&encode_raw(&f).unwrap()).unwrap();
        assert_eq!(back.timestamp(), 12.25);
        assert!(back.temps().iter().all(|&t| (t - 21.5).abs() < 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_within_half_centidegree(seed in any::<u64>(), lo in -50.0f64..100.0, span in 0.001f64..400.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let hi = (lo + span).min(500.0);
            let temps: Vec<f64> = (0..SENSOR_WIDTH * SENSOR_HEIGHT)
                .map(|_| rng.random_range(lo..=hi))
                .collect();
            let f = ThermalFrame::new(SENSOR_WIDTH, SENSOR_HEIGHT, temps, 3.5).unwrap();
            let back = decode_raw(&encode_raw(&f).unwrap()).unwrap();
            let max_err = f
                .temps()
                .iter()
                .zip(back.temps())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            prop_assert!(max_err <= 0.005 + 1e-9, "max error {max_err}");
        }
    }
}
