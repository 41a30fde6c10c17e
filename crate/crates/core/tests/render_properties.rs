mod common;

use chess_saliency::chess::{BoardState, Color, Square};
use chess_saliency::geometry::square_rect;
use chess_saliency::render::{png_bytes, read_png, render, Image, RenderTheme};
use common::random_position;
use proptest::prelude::*;

fn cell_pixels(img: &Image, x0: usize, y0: usize, cell: usize) -> Vec<[u8; 3]> {
    (0..cell).flat_map(|y| (0..cell).map(move |x| (x, y))).map(|(x, y)| img.pixel(x0 + x, y0 + y)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn rendering_is_deterministic(seed in any::<u64>(), plies in 0usize..60) {
        let b = random_position(seed, plies);
        let theme = RenderTheme::with_cell_size(8);
        let a = png_bytes(&render(&b, Color::White, &theme).unwrap());
        let c = png_bytes(&render(&b, Color::White, &theme).unwrap());
        prop_assert_eq!(&a, &c);
        prop_assert_eq!(read_png(&a[..]).unwrap(), render(&b, Color::White, &theme).unwrap());
    }

    #[test]
    fn black_view_is_rotated_white_view(seed in any::<u64>(), plies in 0usize..60) {
        let b = random_position(seed, plies);
        let theme = RenderTheme::with_cell_size(8);
        // Glyphs stay upright, so the views agree exactly on rotated positions ...
        prop_assert_eq!(render(&b, Color::Black, &theme).unwrap(), render(&b.rotated(), Color::White, &theme).unwrap());
        // ... and the pixel rotation of the black view maps cell blocks onto the
        // white view of the rotated position.
        let black = render(&b, Color::Black, &theme).unwrap();
        let turned = black.rotate180();
        let white_rot = render(&b.rotated(), Color::White, &theme).unwrap();
        for sq in Square::all() {
            let r = square_rect(sq, Color::White, 8);
            let rr = square_rect(sq.rotated(), Color::White, 8);
            let mut a = cell_pixels(&turned, r.x, r.y, 8);
            a.reverse();
            prop_assert_eq!(a, cell_pixels(&white_rot, rr.x, rr.y, 8));
        }
    }

    #[test]
    fn occupied_cells_show_a_glyph(seed in any::<u64>(), plies in 0usize..60, black in any::<bool>()) {
        let b = random_position(seed, plies);
        let persp = if black { Color::Black } else { Color::White };
        let theme = RenderTheme::with_cell_size(8);
        let img = render(&b, persp, &theme).unwrap();
        let empty = render(&BoardState::empty(), persp, &theme).unwrap();
        for sq in Square::all() {
            let r = square_rect(sq, persp, 8);
            let differs = cell_pixels(&img, r.x, r.y, 8) != cell_pixels(&empty, r.x, r.y, 8);
            prop_assert_eq!(differs, b.get(sq).is_some(), "{}", sq);
        }
    }
}
