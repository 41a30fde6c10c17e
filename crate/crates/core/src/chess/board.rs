use std::fmt;

use super::types::{Color, Piece, PieceKind, Square};
use super::ChessError;

pub const STARTING_FEN: &str = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CastlingRights {
    pub white_king: bool,
    pub white_queen: bool,
    pub black_king: bool,
    pub black_queen: bool,
}

impl CastlingRights {
    pub const ALL: CastlingRights = CastlingRights {
        white_king: true,
        white_queen: true,
        black_king: true,
        black_queen: true,
    };

    pub fn king_side(&self, color: Color) -> bool {
        match color {
            Color::White => self.white_king,
            Color::Black => self.black_king,
        }
    }

    pub fn queen_side(&self, color: Color) -> bool {
        match color {
            Color::White => self.white_queen,
            Color::Black => self.black_queen,
        }
    }

    pub fn clear(&mut self, color: Color) {
        match color {
            Color::White => {
                self.white_king = false;
                self.white_queen = false;
            }
            Color::Black => {
                self.black_king = false;
                self.black_queen = false;
            }
        }
    }

    /// Drop whichever right depends on a rook standing on `sq`.
    pub fn clear_rook_square(&mut self, sq: Square) {
        match (sq.file(), sq.rank()) {
            (0, 0) => self.white_queen = false,
            (7, 0) => self.white_king = false,
            (0, 7) => self.black_queen = false,
            (7, 7) => self.black_king = false,
            _ => {}
        }
    }

    pub fn swapped(self) -> CastlingRights {
        CastlingRights {
            white_king: self.black_king,
            white_queen: self.black_queen,
            black_king: self.white_king,
            black_queen: self.white_queen,
        }
    }

    fn to_fen_field(self) -> String {
        let mut s = String::new();
        if self.white_king {
            s.push('K');
        }
        if self.white_queen {
            s.push('Q');
        }
        if self.black_king {
            s.push('k');
        }
        if self.black_queen {
            s.push('q');
        }
        if s.is_empty() {
            s.push('-');
        }
        s
    }
}

/// A full chess position.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BoardState {
    squares: [Option<Piece>; 64],
    pub side_to_move: Color,
    pub castling: CastlingRights,
    pub en_passant: Option<Square>,
    pub halfmove_clock: u32,
    pub fullmove_number: u32,
}

impl Default for BoardState {
    fn default() -> Self {
        BoardState::starting()
    }
}

impl BoardState {
    pub fn empty() -> BoardState {
        BoardState {
            squares: [None; 64],
            side_to_move: Color::White,
            castling: CastlingRights::default(),
            en_passant: None,
            halfmove_clock: 0,
            fullmove_number: 1,
        }
    }

    pub fn starting() -> BoardState {
        BoardState::from_fen(STARTING_FEN).expect("starting FEN is valid")
    }

    pub fn get(&self, sq: Square) -> Option<Piece> {
        self.squares[sq.index()]
    }

    pub fn set(&mut self, sq: Square, piece: Option<Piece>) {
        self.squares[sq.index()] = piece;
    }

    pub fn pieces(&self) -> impl Iterator<Item = (Square, Piece)> + '_ {
        self.squares
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (Square::from_index(i), p)))
    }

    pub fn piece_count(&self) -> usize {
        self.squares.iter().filter(|p| p.is_some()).count()
    }

    pub fn king_square(&self, color: Color) -> Option<Square> {
        self.pieces()
            .find(|(_, p)| p.kind == PieceKind::King && p.color == color)
            .map(|(sq, _)| sq)
    }

    /// Parse a FEN record. Trailing fields may be omitted: castling and en
    /// passant default to `-`, the clocks to `0 1`.
    pub fn from_fen(text: &str) -> Result<BoardState, ChessError> {
        let bad = |msg: String| ChessError::MalformedFen {
            fen: text.to_string(),
            reason: msg,
        };
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 6 {
            return Err(bad(format!("expected 6 fields, found {}", fields.len())));
        }

        let mut board = BoardState::empty();
        let ranks: Vec<&str> = fields[0].split('/').collect();
        if ranks.len() != 8 {
            return Err(bad(format!("expected 8 ranks, found {}", ranks.len())));
        }
        for (row, rank_text) in ranks.iter().enumerate() {
            let rank = 7 - row as u8;
            let mut file: u32 = 0;
            for c in rank_text.chars() {
                if let Some(d) = c.to_digit(10) {
                    if d == 0 || d > 8 {
                        return Err(bad(format!("bad empty-run digit `{c}`")));
                    }
                    file += d;
                } else {
                    let piece =
                        Piece::from_fen_char(c).ok_or_else(|| bad(format!("bad piece letter `{c}`")))?;
                    if file >= 8 {
                        return Err(bad(format!("rank {} is longer than 8 cells", rank + 1)));
                    }
                    if piece.kind == PieceKind::Pawn && (rank == 0 || rank == 7) {
                        return Err(bad(format!("pawn on back rank {}", rank + 1)));
                    }
                    board.set(Square::at(file as u8, rank), Some(piece));
                    file += 1;
                }
                if file > 8 {
                    return Err(bad(format!("rank {} is longer than 8 cells", rank + 1)));
                }
            }
            if file != 8 {
                return Err(bad(format!("rank {} spans {file} cells", rank + 1)));
            }
        }

        board.side_to_move = match fields[1] {
            "w" => Color::White,
            "b" => Color::Black,
            other => return Err(bad(format!("bad side to move `{other}`"))),
        };

        if let Some(&castling) = fields.get(2) {
            if castling != "-" {
                for c in castling.chars() {
                    let slot = match c {
                        'K' => &mut board.castling.white_king,
                        'Q' => &mut board.castling.white_queen,
                        'k' => &mut board.castling.black_king,
                        'q' => &mut board.castling.black_queen,
                        _ => return Err(bad(format!("bad castling flag `{c}`"))),
                    };
                    if *slot {
                        return Err(bad(format!("repeated castling flag `{c}`")));
                    }
                    *slot = true;
                }
            }
        }

        if let Some(&ep) = fields.get(3) {
            if ep != "-" {
                let sq: Square = ep.parse().map_err(bad)?;
                if sq.rank() != 2 && sq.rank() != 5 {
                    return Err(bad(format!("en passant square {sq} not on rank 3 or 6")));
                }
                board.en_passant = Some(sq);
            }
        }

        if let Some(&half) = fields.get(4) {
            board.halfmove_clock = half
                .parse()
                .map_err(|_| bad(format!("bad halfmove clock `{half}`")))?;
        }
        if let Some(&full) = fields.get(5) {
            board.fullmove_number = full
                .parse()
                .map_err(|_| bad(format!("bad fullmove number `{full}`")))?;
            if board.fullmove_number == 0 {
                return Err(bad("fullmove number must be at least 1".into()));
            }
        }
        Ok(board)
    }

    pub fn to_fen(&self) -> String {
        let mut placement = String::with_capacity(72);
        for rank in (0..8).rev() {
            let mut run = 0;
            for file in 0..8 {
                match self.get(Square::at(file, rank)) {
                    Some(p) => {
                        if run > 0 {
                            placement.push(char::from(b'0' + run));
                            run = 0;
                        }
                        placement.push(p.fen_char());
                    }
                    None => run += 1,
                }
            }
            if run > 0 {
                placement.push(char::from(b'0' + run));
            }
            if rank > 0 {
                placement.push('/');
            }
        }
        let side = match self.side_to_move {
            Color::White => "w",
            Color::Black => "b",
        };
        let ep = self
            .en_passant
            .map(|s| s.to_string())
            .unwrap_or_else(|| "-".into());
        format!(
            "{placement} {side} {} {ep} {} {}",
            self.castling.to_fen_field(),
            self.halfmove_clock,
            self.fullmove_number
        )
    }

    /// Checks the structural position invariants: one king per color,
    /// no pawns on the back ranks, en passant square on rank 3 or 6.
    pub fn validate(&self) -> Result<(), ChessError> {
        for color in Color::ALL {
            let kings = self
                .pieces()
                .filter(|(_, p)| p.kind == PieceKind::King && p.color == color)
                .count();
            if kings != 1 {
                return Err(ChessError::InvalidPosition(format!(
                    "{color} has {kings} kings"
                )));
            }
        }
        if let Some((sq, _)) = self
            .pieces()
            .find(|(sq, p)| p.kind == PieceKind::Pawn && (sq.rank() == 0 || sq.rank() == 7))
        {
            return Err(ChessError::InvalidPosition(format!("pawn on {sq}")));
        }
        if let Some(ep) = self.en_passant {
            if ep.rank() != 2 && ep.rank() != 5 {
                return Err(ChessError::InvalidPosition(format!(
                    "en passant square {ep}"
                )));
            }
        }
        Ok(())
    }

    /// Flip every piece's color, the side to move and the castling rights.
    /// Piece placement is unchanged; so is the en passant square.
    pub fn swap_colors(&self) -> BoardState {
        let mut out = self.clone();
        for sq in Square::all() {
            out.set(sq, self.get(sq).map(|p| p.with_color(p.color.opposite())));
        }
        out.side_to_move = self.side_to_move.opposite();
        out.castling = self.castling.swapped();
        out
    }

    /// The same pieces with every square rotated by 180 degrees.
    pub fn rotated(&self) -> BoardState {
        let mut out = self.clone();
        for sq in Square::all() {
            out.set(sq.rotated(), self.get(sq));
        }
        out.en_passant = self.en_passant.map(Square::rotated);
        out
    }

    /// Mirror ranks (rank r becomes 7 - r) and swap colors: the same
    /// position seen with the roles of the players exchanged.
    pub fn color_mirrored(&self) -> BoardState {
        let mut out = self.swap_colors();
        for sq in Square::all() {
            let mirrored = Square::at(sq.file(), 7 - sq.rank());
            out.set(mirrored, self.get(sq).map(|p| p.with_color(p.color.opposite())));
        }
        out.en_passant = self
            .en_passant
            .map(|s| Square::at(s.file(), 7 - s.rank()));
        out
    }
}

impl fmt::Debug for BoardState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoardState({})", self.to_fen())
    }
}

impl fmt::Display for BoardState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rank in (0..8).rev() {
            for file in 0..8 {
                let c = self
                    .get(Square::at(file, rank))
                    .map(Piece::fen_char)
                    .unwrap_or('.');
                write!(f, "{c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl std::str::FromStr for BoardState {
    type Err = ChessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BoardState::from_fen(s)
    }
}
