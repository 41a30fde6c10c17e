//! Standard Algebraic Notation: parsing, resolution against the legal
//! moves of a position, and canonical rendering.

use super::board::BoardState;
use super::movegen::{is_in_check, legal_moves, make_move, Move, MoveKind};
use super::types::{Piece, PieceKind, Square};
use super::ChessError;

/// A resolved move together with the facts downstream consumers need.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MoveRecord {
    pub from: Square,
    pub to: Square,
    pub piece: Piece,
    pub captured: Option<Piece>,
    pub promotion: Option<PieceKind>,
    pub is_castle: bool,
    pub is_en_passant: bool,
    pub gives_check: bool,
    pub san: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SanPattern {
    Castle { king_side: bool },
    Piece {
        kind: PieceKind,
        from_file: Option<u8>,
        from_rank: Option<u8>,
        to: Square,
        promotion: Option<PieceKind>,
    },
}

fn parse_pattern(token: &str) -> Option<SanPattern> {
    let core = token.trim_end_matches(['+', '#', '!', '?']);
    let core = core.strip_suffix("e.p.").unwrap_or(core);
    match core {
        "O-O" | "0-0" => return Some(SanPattern::Castle { king_side: true }),
        "O-O-O" | "0-0-0" => return Some(SanPattern::Castle { king_side: false }),
        _ => {}
    }
    let bytes = core.as_bytes();
    if bytes.is_empty() {
        return None;
    }
    let (kind, rest) = match bytes[0] {
        b'N' | b'B' | b'R' | b'Q' | b'K' => (PieceKind::from_letter(bytes[0] as char)?, &core[1..]),
        b'a'..=b'h' => (PieceKind::Pawn, core),
        _ => return None,
    };

    // Split off a trailing promotion, written `=Q` or `Q`.
    let (rest, promotion) = match rest.as_bytes().last() {
        Some(&c) if kind == PieceKind::Pawn && matches!(c, b'N' | b'B' | b'R' | b'Q') => {
            let body = &rest[..rest.len() - 1];
            (body.strip_suffix('=').unwrap_or(body), PieceKind::from_letter(c as char))
        }
        _ => (rest, None),
    };

    let rest: Vec<u8> = rest.bytes().filter(|&b| b != b'x' && b != b'-').collect();
    if rest.len() < 2 || rest.len() > 4 {
        return None;
    }
    let (disamb, dest) = rest.split_at(rest.len() - 2);
    let to = Square::new(dest[0].wrapping_sub(b'a'), dest[1].wrapping_sub(b'1'))?;
    let mut from_file = None;
    let mut from_rank = None;
    for &c in disamb {
        match c {
            b'a'..=b'h' if from_file.is_none() && from_rank.is_none() => from_file = Some(c - b'a'),
            b'1'..=b'8' if from_rank.is_none() => from_rank = Some(c - b'1'),
            _ => return None,
        }
    }
    if kind == PieceKind::Pawn && from_rank.is_some() {
        return None;
    }
    Some(SanPattern::Piece {
        kind,
        from_file,
        from_rank,
        to,
        promotion,
    })
}

fn matches_pattern(m: &Move, pattern: &SanPattern) -> bool {
    match *pattern {
        SanPattern::Castle { king_side } => {
            m.kind
                == if king_side {
                    MoveKind::CastleKingSide
                } else {
                    MoveKind::CastleQueenSide
                }
        }
        SanPattern::Piece {
            kind,
            from_file,
            from_rank,
            to,
            promotion,
        } => {
            m.piece.kind == kind
                && m.to == to
                && !m.is_castle()
                && m.promotion == promotion
                && from_file.map_or(true, |f| m.from.file() == f)
                && from_rank.map_or(true, |r| m.from.rank() == r)
        }
    }
}

/// Find the unique legal move named by `san` in `board`.
pub fn resolve_san(board: &BoardState, san: &str) -> Result<Move, ChessError> {
    let pattern = parse_pattern(san).ok_or_else(|| ChessError::MalformedSan(san.to_string()))?;
    let mut candidates = legal_moves(board)
        .into_iter()
        .filter(|m| matches_pattern(m, &pattern));
    let first = candidates.next().ok_or_else(|| ChessError::IllegalMove {
        san: san.to_string(),
        fen: board.to_fen(),
    })?;
    if candidates.next().is_some() {
        return Err(ChessError::AmbiguousMove {
            san: san.to_string(),
            fen: board.to_fen(),
        });
    }
    Ok(first)
}

/// Canonical SAN for a legal move, including the `+` / `#` suffix.
pub fn move_to_san(board: &BoardState, m: &Move) -> String {
    let mut s = match m.kind {
        MoveKind::CastleKingSide => "O-O".to_string(),
        MoveKind::CastleQueenSide => "O-O-O".to_string(),
        _ => {
            let mut s = String::new();
            if m.piece.kind == PieceKind::Pawn {
                if m.captured.is_some() {
                    s.push((b'a' + m.from.file()) as char);
                }
            } else {
                s.push(m.piece.kind.letter());
                let rivals: Vec<Move> = legal_moves(board)
                    .into_iter()
                    .filter(|o| o.piece == m.piece && o.to == m.to && o.from != m.from)
                    .collect();
                if !rivals.is_empty() {
                    let same_file = rivals.iter().any(|o| o.from.file() == m.from.file());
                    let same_rank = rivals.iter().any(|o| o.from.rank() == m.from.rank());
                    if !same_file {
                        s.push((b'a' + m.from.file()) as char);
                    } else if !same_rank {
                        s.push((b'1' + m.from.rank()) as char);
                    } else {
                        s.push_str(&m.from.to_string());
                    }
                }
            }
            if m.captured.is_some() {
                s.push('x');
            }
            s.push_str(&m.to.to_string());
            if let Some(p) = m.promotion {
                s.push('=');
                s.push(p.letter());
            }
            s
        }
    };
    let after = make_move(board, m);
    if is_in_check(&after, after.side_to_move) {
        s.push(if legal_moves(&after).is_empty() { '#' } else { '+' });
    }
    s
}

/// Build the record for a legal move `m` of `board`, returning the
/// resulting position alongside it.
pub fn record_move(board: &BoardState, m: &Move) -> (BoardState, MoveRecord) {
    let after = make_move(board, m);
    let record = MoveRecord {
        from: m.from,
        to: m.to,
        piece: m.piece,
        captured: m.captured,
        promotion: m.promotion,
        is_castle: m.is_castle(),
        is_en_passant: m.kind == MoveKind::EnPassant,
        gives_check: is_in_check(&after, after.side_to_move),
        san: move_to_san(board, m),
    };
    (after, record)
}

/// Play the SAN move `san` on `board`.
pub fn apply_san(board: &BoardState, san: &str) -> Result<(BoardState, MoveRecord), ChessError> {
    let m = resolve_san(board, san)?;
    Ok(record_move(board, &m))
}
