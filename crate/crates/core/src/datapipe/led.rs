//! LED timestamp panel: 20 cells showing a binary millisecond counter
//! (most significant bit first, modulo 2²⁰) along the top rows of the
//! orthophoto.

use super::{DataError, Grid};

pub const LED_CELLS: usize = 20;
pub const LED_MODULUS: u64 = 1 << LED_CELLS;
pub const LED_ON: f32 = 0.95;
pub const LED_OFF: f32 = 0.05;
/// Rows occupied by the strip at the top of the image.
pub const LED_ROWS: usize = 2;
const DEAD_ZONE: (f32, f32) = (0.4, 0.6);

pub fn encode_led(ms: u64) -> [f32; LED_CELLS] {
    let code = ms % LED_MODULUS;
    let mut cells = [LED_OFF; LED_CELLS];
    for (i, c) in cells.iter_mut().enumerate() {
        if code >> (LED_CELLS - 1 - i) & 1 == 1 {
            *c = LED_ON;
        }
    }
    cells
}

pub fn decode_led(cells: &[f32]) -> Result<u32, DataError> {
    if cells.len() != LED_CELLS {
        return Err(DataError::Input(format!(
            "LED strip needs {LED_CELLS} cells, got {}",
            cells.len()
        )));
    }
    let mut code = 0u32;
    for (i, &v) in cells.iter().enumerate() {
        let bit = if v > DEAD_ZONE.1 {
            1
        } else if v < DEAD_ZONE.0 {
            0
        } else {
            return Err(DataError::LedUnreadable { cell: i, intensity: v });
        };
        code = code << 1 | bit;
    }
    Ok(code)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyncCheck {
    pub synchronized: bool,
    pub left_ms: u32,
    pub right_ms: u32,
}

/// Decodes the strips seen by the two cameras and compares them.
pub fn verify_sync(left: &[f32], right: &[f32]) -> Result<SyncCheck, DataError> {
    let left_ms = decode_led(left)?;
    let right_ms = decode_led(right)?;
    Ok(SyncCheck {
        synchronized: left_ms == right_ms,
        left_ms,
        right_ms,
    })
}

fn cell_span(j: usize, w: usize) -> (usize, usize) {
    (j * w / LED_CELLS, (j + 1) * w / LED_CELLS)
}

/// Paints the strip for `ms` into the top rows of an orthophoto.
pub fn paint_led_strip(ortho: &mut Grid, ms: u64) -> Result<(), DataError> {
    let (h, w) = ortho.shape();
    if w < LED_CELLS || h < LED_ROWS {
        return Err(DataError::Input(format!("{h}x{w} image cannot hold the LED strip")));
    }
    for (j, v) in encode_led(ms).into_iter().enumerate() {
        let (x0, x1) = cell_span(j, w);
        for y in 0..LED_ROWS {
            for x in x0..x1 {
                ortho.set(y, x, v);
            }
        }
    }
    Ok(())
}

/// Reads the cell intensities back (mean over each cell).
pub fn read_led_strip(ortho: &Grid) -> Result<[f32; LED_CELLS], DataError> {
    let (h, w) = ortho.shape();
    if w < LED_CELLS || h < LED_ROWS {
        return Err(DataError::Input(format!("{h}x{w} image cannot hold the LED strip")));
    }
    let mut cells = [0.0; LED_CELLS];
    for (j, c) in cells.iter_mut().enumerate() {
        let (x0, x1) = cell_span(j, w);
        let mut s = 0.0;
        for y in 0..LED_ROWS {
            for x in x0..x1 {
                s += ortho.get(y, x);
            }
        }
        *c = s / (LED_ROWS * (x1 - x0)) as f32;
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn five_ms_is_synchronized() {
        let c = encode_led(0b101);
        assert_eq!(&c[17..], &[LED_ON, LED_OFF, LED_ON]);
        let s = verify_sync(&c, &c).unwrap();
        assert!(s.synchronized);
        assert_eq!(s.left_ms, 5);
    }

    #[test]
    fn one_ms_apart_is_not_synchronized() {
        let s = verify_sync(&encode_led(1000), &encode_led(1001)).unwrap();
        assert!(!s.synchronized);
    }

    #[test]
    fn dead_zone_cell_is_an_error() {
        let mut c = encode_led(77);
        c[3] = 0.5;
        assert!(matches!(decode_led(&c), Err(DataError::LedUnreadable { cell: 3, .. })));
    }

    #[test]
    fn random_round_trip_through_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut img = Grid::filled(64, 64, 0.3);
        for _ in 0..1000 {
            let t: u64 = rng.random_range(0..LED_MODULUS);
            paint_led_strip(&mut img, t).unwrap();
            let cells = read_led_strip(&img).unwrap();
            assert_eq!(decode_led(&cells).unwrap() as u64, t);
        }
    }

    #[test]
    fn counter_wraps() {
        assert_eq!(decode_led(&encode_led(LED_MODULUS + 9)).unwrap(), 9);
    }
}
