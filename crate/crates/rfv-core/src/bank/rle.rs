//! Row-major run-length encoding for binary masks.
//!
//! Runs alternate background/foreground and always start with a background
//! run, which may be zero-length when the bitmap begins with foreground.

use crate::error::{Error, Result};

/// Encode a row-major binary bitmap (nonzero = foreground) into runs.
pub fn encode_rle(bitmap: &[u8]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current_fg = false; // runs start with background
    let mut count = 0usize;
    for &px in bitmap {
        let fg = px != 0;
        if fg == current_fg {
            count += 1;
        } else {
            runs.push(count);
            current_fg = fg;
            count = 1;
        }
    }
    runs.push(count);
    runs
}

/// Decode runs back into a row-major binary bitmap of `width * height`.
pub fn decode_rle(runs: &[usize], width: usize, height: usize) -> Result<Vec<u8>> {
    let area = width * height;
    let total: usize = runs.iter().sum();
    if total != area {
        return Err(Error::AreaMismatch {
            runs_sum: total,
            expected: area,
        });
    }
    let mut bitmap = Vec::with_capacity(area);
    let mut fg = false;
    for &run in runs {
        let value = u8::from(fg);
        bitmap.resize(bitmap.len() + run, value);
        fg = !fg;
    }
    Ok(bitmap)
}

/// Number of foreground pixels described by the runs.
pub fn foreground_area(runs: &[usize]) -> usize {
    runs.iter().skip(1).step_by(2).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_background_is_single_run() {
        assert_eq!(encode_rle(&[0, 0, 0, 0]), vec![4]);
    }

    #[test]
    fn leading_foreground_forces_zero_run() {
        assert_eq!(encode_rle(&[1, 1, 0, 0]), vec![0, 2, 2]);
    }

    #[test]
    fn decode_checks_area() {
        match decode_rle(&[3], 2, 2) {
            Err(Error::AreaMismatch {
                runs_sum: 3,
                expected: 4,
            }) => {}
            other => panic!("expected AreaMismatch, got {other:?}"),
        }
    }

    #[test]
    fn foreground_area_counts_odd_runs() {
        assert_eq!(foreground_area(&[0, 2, 2]), 2);
        assert_eq!(foreground_area(&[4]), 0);
        assert_eq!(foreground_area(&[1, 1, 1, 1]), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn roundtrip_identity(bits in proptest::collection::vec(0u8..=1, 256)) {
            let runs = encode_rle(&bits);
            let back = decode_rle(&runs, 16, 16).unwrap();
            prop_assert_eq!(back, bits);
        }
    }
}
