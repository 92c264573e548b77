//! Built-in 5x7 digit glyphs, so the image benchmark needs no external data.

/// Rows of the 5x7 bitmap for a digit, most significant bit leftmost.
pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;

const GLYPHS: [[u8; GLYPH_H]; 10] = [
    // 0
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    // 1
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    // 2
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    // 3
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    // 4
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    // 5
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    // 6
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    // 7
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    // 8
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    // 9
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

/// Whether the glyph bitmap for `digit` is set at (col, row).
pub fn glyph_pixel(digit: u8, col: usize, row: usize) -> bool {
    debug_assert!(digit < 10 && col < GLYPH_W && row < GLYPH_H);
    (GLYPHS[digit as usize][row] >> (GLYPH_W - 1 - col)) & 1 == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_digit_has_ink_and_background() {
        for d in 0..10u8 {
            let mut on = 0;
            for row in 0..GLYPH_H {
                for col in 0..GLYPH_W {
                    if glyph_pixel(d, col, row) {
                        on += 1;
                    }
                }
            }
            assert!(on > 5 && on < GLYPH_W * GLYPH_H, "digit {d} has {on} ink pixels");
        }
    }

    #[test]
    fn digits_are_pairwise_distinct() {
        for a in 0..10u8 {
            for b in (a + 1)..10 {
                let same = (0..GLYPH_H)
                    .all(|r| (0..GLYPH_W).all(|c| glyph_pixel(a, c, r) == glyph_pixel(b, c, r)));
                assert!(!same, "digits {a} and {b} render identically");
            }
        }
    }
}
