//! Radiometric thermal frames and the pseudocolor pipeline.
//!
//! A raw frame holds one surface temperature (°C) per pixel. The executor and
//! planner never see temperatures directly: frames are linearly normalized
//! into a display range, quantized to 8 bits, looked up in the INFERNO table
//! and padded to the 256×256 model input.

mod codec;
mod palette_table;

pub use codec::{decode_raw, encode_raw, RAW_OFFSET_C, RAW_SCALE};
pub use palette_table::INFERNO_RGB;

use image::RgbImage;
use serde::{Deserialize, Serialize};

pub type Rgb = [u8; 3];

/// Native resolution of the external thermal sensor.
pub const SENSOR_WIDTH: usize = 256;
pub const SENSOR_HEIGHT: usize = 192;
/// Side length of the square image fed to the models.
pub const MODEL_INPUT_SIZE: u32 = 256;

/// Sensor plausibility bounds in °C.
pub const MIN_PLAUSIBLE_C: f64 = -50.0;
pub const MAX_PLAUSIBLE_C: f64 = 500.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ThermalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("format error: {0}")]
    Format(String),
}

/// Per-pixel surface temperatures in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalFrame {
    width: usize,
    height: usize,
    temps: Vec<f64>,
    timestamp: f64,
}

impl ThermalFrame {
    pub fn new(
        width: usize,
        height: usize,
        temps: Vec<f64>,
        timestamp: f64,
    ) -> Result<Self, ThermalError> {
        let frame = Self {
            width,
            height,
            temps,
            timestamp,
        };
        frame.validate()?;
        Ok(frame)
    }

    /// A frame where every pixel reads `temp`.
    pub fn uniform(
        width: usize,
        height: usize,
        temp: f64,
        timestamp: f64,
    ) -> Result<Self, ThermalError> {
        Self::new(width, height, vec![temp; width * height], timestamp)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        timestamp: f64,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self, ThermalError> {
        let mut temps = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                temps.push(f(x, y));
            }
        }
        Self::new(width, height, temps, timestamp)
    }

    pub fn validate(&self) -> Result<(), ThermalError> {
        if self.width == 0 || self.height == 0 {
            return Err(ThermalError::InvalidInput("empty frame".into()));
        }
        if self.width * self.height != self.temps.len() {
            return Err(ThermalError::InvalidInput(format!(
                "{}x{} frame carries {} samples",
                self.width,
                self.height,
                self.temps.len()
            )));
        }
        if !self.timestamp.is_finite() {
            return Err(ThermalError::InvalidInput("non-finite timestamp".into()));
        }
        if let Some((i, t)) = self
            .temps
            .iter()
            .enumerate()
            .find(|(_, t)| !(MIN_PLAUSIBLE_C..=MAX_PLAUSIBLE_C).contains(*t))
        {
            return Err(ThermalError::InvalidInput(format!(
                "pixel {i} reads {t} °C, outside [{MIN_PLAUSIBLE_C}, {MAX_PLAUSIBLE_C}]"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.temps[y * self.width + x]
    }
}

/// Display range for normalization. Temperatures outside are clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempRange {
    lo: f64,
    hi: f64,
}

impl TempRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ThermalError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ThermalError::InvalidInput(format!(
                "temperature range [{lo}, {hi}] must satisfy lo < hi"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }
}

impl Default for TempRange {
    fn default() -> Self {
        Self { lo: 20.0, hi: 35.0 }
    }
}

/// Rec. 709 relative luminance of an 8-bit color.
pub fn luminance(rgb: Rgb) -> f64 {
    0.2126 * rgb[0] as f64 + 0.7152 * rgb[1] as f64 + 0.0722 * rgb[2] as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfernoPalette {
    entries: [Rgb; 256],
}

impl InfernoPalette {
    pub fn standard() -> Self {
        Self {
            entries: INFERNO_RGB,
        }
    }

    /// Builds a palette from arbitrary entries, enforcing the monotone-luminance
    /// invariant.
    pub fn from_entries(entries: [Rgb; 256]) -> Result<Self, ThermalError> {
        for i in 1..entries.len() {
            if luminance(entries[i]) <= luminance(entries[i - 1]) {
                return Err(ThermalError::InvalidInput(format!(
                    "palette luminance not increasing at entry {i}"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Rgb; 256] {
        &self.entries
    }

    pub fn coldest(&self) -> Rgb {
        self.entries[0]
    }

    pub fn hottest(&self) -> Rgb {
        self.entries[255]
    }
}

impl Default for InfernoPalette {
    fn default() -> Self {
        Self::standard()
    }
}

/// A 256×256 RGB image produced by the pseudocolor pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudocolorImage(RgbImage);

impl PseudocolorImage {
    pub fn from_image(image: RgbImage) -> Result<Self, ThermalError> {
        if image.width() != MODEL_INPUT_SIZE || image.height() != MODEL_INPUT_SIZE {
            return Err(ThermalError::InvalidInput(format!(
                "pseudocolor image must be {MODEL_INPUT_SIZE}x{MODEL_INPUT_SIZE}, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(Self(image))
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        self.0.get_pixel(x, y).0
    }

    pub fn as_image(&self) -> &RgbImage {
        &self.0
    }

    pub fn into_image(self) -> RgbImage {
        self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_raw()
    }
}

/// Maps `t` linearly onto [0, 1] over `range`, clamping outside it.
pub fn normalize_temperature(t: f64, range: &TempRange) -> Result<f64, ThermalError> {
    if !t.is_finite() {
        return Err(ThermalError::InvalidInput(format!(
            "temperature {t} is not finite"
        )));
    }
    Ok(((t - range.lo) / (range.hi - range.lo)).clamp(0.0, 1.0))
}

/// Rounds `u·255` half-up to an 8-bit level.
pub fn quantize(u: f64) -> Result<u8, ThermalError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(ThermalError::InvalidInput(format!(
            "{u} is outside the unit interval"
        )));
    }
    Ok((u * 255.0 + 0.5).floor() as u8)
}

pub fn apply_palette(q: u8, palette: &InfernoPalette) -> Rgb {
    palette.entries[q as usize]
}

/// Colorizes a full frame and pads it vertically to the square model input.
///
/// Frames must be 256 pixels wide and at most 256 tall. The missing rows are
/// split evenly above and below (32 each for the native 256×192 sensor) and
/// filled with the coldest palette entry; columns are never rescaled.
pub fn thermal_to_pseudocolor(
    frame: &ThermalFrame,
    range: &TempRange,
    palette: &InfernoPalette,
) -> Result<PseudocolorImage, ThermalError> {
    frame.validate()?;
    let size = MODEL_INPUT_SIZE as usize;
    if frame.width != size || frame.height > size {
        return Err(ThermalError::InvalidInput(format!(
            "cannot pad a {}x{} frame to {size}x{size}",
            frame.width, frame.height
        )));
    }
    let top = (size - frame.height) / 2;
    let pad = palette.coldest();
    let mut image = RgbImage::from_pixel(size as u32, size as u32, image::Rgb(pad));
    for y in 0..frame.height {
        for x in 0..frame.width {
            let u = normalize_temperature(frame.get(x, y), range)?;
            let rgb = apply_palette(quantize(u)?, palette);
            image.put_pixel(x as u32, (y + top) as u32, image::Rgb(rgb));
        }
    }
    Ok(PseudocolorImage(image))
}
