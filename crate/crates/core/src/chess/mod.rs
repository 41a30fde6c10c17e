//! Chess positions, FEN/PGN/SAN handling and the move facts used to build
//! top-down saliency maps.

mod board;
mod movegen;
mod pgn;
mod san;
mod types;

pub use board::{BoardState, CastlingRights, STARTING_FEN};
pub use movegen::{is_in_check, is_square_attacked, legal_moves, make_move, pseudo_legal_moves, Move, MoveKind};
pub use pgn::{parse_pgn, parse_record, Game, PgnReader, RawRecord, RecordSplitter};
pub use san::{apply_san, move_to_san, record_move, resolve_san, MoveRecord};
pub use types::{Color, Piece, PieceKind, Square};

#[derive(Debug, thiserror::Error)]
pub enum ChessError {
    #[error("malformed FEN `{fen}`: {reason}")]
    MalformedFen { fen: String, reason: String },
    #[error("invalid position: {0}")]
    InvalidPosition(String),
    #[error("malformed SAN token `{0}`")]
    MalformedSan(String),
    #[error("illegal move `{san}` in {fen}")]
    IllegalMove { san: String, fen: String },
    #[error("ambiguous move `{san}` in {fen}")]
    AmbiguousMove { san: String, fen: String },
    #[error("malformed PGN in game {game}: {reason}")]
    MalformedPgn { game: usize, reason: String },
    #[error("game {game}, ply {ply}: {source}")]
    InGame {
        game: usize,
        ply: usize,
        #[source]
        source: Box<ChessError>,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

pub fn parse_fen(text: &str) -> Result<BoardState, ChessError> {
    BoardState::from_fen(text)
}

pub fn to_fen(board: &BoardState) -> String {
    board.to_fen()
}

pub fn swap_colors(board: &BoardState) -> BoardState {
    board.swap_colors()
}

impl MoveRecord {
    /// Rebuild the generator-level move this record was made from.
    pub fn as_move(&self) -> Move {
        let kind = if self.is_castle {
            if self.to.file() > self.from.file() {
                MoveKind::CastleKingSide
            } else {
                MoveKind::CastleQueenSide
            }
        } else if self.is_en_passant {
            MoveKind::EnPassant
        } else if self.piece.kind == PieceKind::Pawn && self.from.rank().abs_diff(self.to.rank()) == 2 {
            MoveKind::DoublePush
        } else {
            MoveKind::Normal
        };
        Move {
            from: self.from,
            to: self.to,
            piece: self.piece,
            captured: self.captured,
            promotion: self.promotion,
            kind,
        }
    }
}

/// Squares strictly between the origin and destination of a move.
///
/// Sliding pieces and two-square pawn pushes report their interior cells;
/// for castling this is the square the king passes over. Knights, kings and
/// one-square moves have an empty path.
pub fn move_path(m: &MoveRecord) -> Vec<Square> {
    let df = m.to.file() as i8 - m.from.file() as i8;
    let dr = m.to.rank() as i8 - m.from.rank() as i8;
    let line = df == 0 || dr == 0 || df.abs() == dr.abs();
    let travels = match m.piece.kind {
        PieceKind::Bishop | PieceKind::Rook | PieceKind::Queen => true,
        PieceKind::Pawn => dr.abs() == 2 && df == 0,
        PieceKind::King => m.is_castle,
        PieceKind::Knight => false,
    };
    if !travels || !line {
        return Vec::new();
    }
    let (sf, sr) = (df.signum(), dr.signum());
    let steps = df.abs().max(dr.abs());
    (1..steps)
        .filter_map(|i| m.from.offset(sf * i, sr * i))
        .collect()
}
