//! Attack detection, legal move generation and move application on a
//! mailbox board.

use super::board::BoardState;
use super::types::{Color, Piece, PieceKind, Square};

const KNIGHT_STEPS: [(i8, i8); 8] = [
    (1, 2),
    (2, 1),
    (2, -1),
    (1, -2),
    (-1, -2),
    (-2, -1),
    (-2, 1),
    (-1, 2),
];
const KING_STEPS: [(i8, i8); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];
const ROOK_DIRS: [(i8, i8); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const BISHOP_DIRS: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Normal,
    DoublePush,
    EnPassant,
    CastleKingSide,
    CastleQueenSide,
}

/// A fully specified move in a given position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Move {
    pub from: Square,
    pub to: Square,
    pub piece: Piece,
    pub captured: Option<Piece>,
    pub promotion: Option<PieceKind>,
    pub kind: MoveKind,
}

impl Move {
    pub fn is_castle(&self) -> bool {
        matches!(self.kind, MoveKind::CastleKingSide | MoveKind::CastleQueenSide)
    }
}

fn slider_hits(board: &BoardState, from: Square, dirs: &[(i8, i8)], mut f: impl FnMut(Square)) {
    for &(df, dr) in dirs {
        let mut cur = from;
        while let Some(next) = cur.offset(df, dr) {
            f(next);
            if board.get(next).is_some() {
                break;
            }
            cur = next;
        }
    }
}

/// True when any piece of color `by` attacks `target`.
pub fn is_square_attacked(board: &BoardState, target: Square, by: Color) -> bool {
    let is = |sq: Option<Square>, kinds: &[PieceKind]| {
        sq.and_then(|s| board.get(s))
            .is_some_and(|p| p.color == by && kinds.contains(&p.kind))
    };
    // A pawn of `by` attacks target from one rank behind it (from its own view).
    let back = -by.pawn_step();
    if is(target.offset(-1, back), &[PieceKind::Pawn]) || is(target.offset(1, back), &[PieceKind::Pawn]) {
        return true;
    }
    if KNIGHT_STEPS
        .iter()
        .any(|&(df, dr)| is(target.offset(df, dr), &[PieceKind::Knight]))
    {
        return true;
    }
    if KING_STEPS
        .iter()
        .any(|&(df, dr)| is(target.offset(df, dr), &[PieceKind::King]))
    {
        return true;
    }
    let mut hit = false;
    slider_hits(board, target, &ROOK_DIRS, |sq| {
        hit |= is(Some(sq), &[PieceKind::Rook, PieceKind::Queen]);
    });
    if hit {
        return true;
    }
    slider_hits(board, target, &BISHOP_DIRS, |sq| {
        hit |= is(Some(sq), &[PieceKind::Bishop, PieceKind::Queen]);
    });
    hit
}

/// True iff `color`'s king stands on a square attacked by the other side.
/// Positions without a king of that color are never in check.
pub fn is_in_check(board: &BoardState, color: Color) -> bool {
    board
        .king_square(color)
        .is_some_and(|k| is_square_attacked(board, k, color.opposite()))
}

/// Moves of the side to move that obey piece movement rules, without
/// checking whether the mover's king is left in check.
pub fn pseudo_legal_moves(board: &BoardState) -> Vec<Move> {
    let us = board.side_to_move;
    let mut moves = Vec::with_capacity(48);
    for (from, piece) in board.pieces().filter(|(_, p)| p.color == us) {
        let mut push = |to: Square, kind: MoveKind| {
            let captured = match kind {
                MoveKind::EnPassant => Some(Piece::new(PieceKind::Pawn, us.opposite())),
                _ => board.get(to),
            };
            moves.push(Move {
                from,
                to,
                piece,
                captured,
                promotion: None,
                kind,
            });
        };
        let step_to = |to: Square, push: &mut dyn FnMut(Square, MoveKind)| match board.get(to) {
            Some(p) if p.color == us => {}
            _ => push(to, MoveKind::Normal),
        };
        match piece.kind {
            PieceKind::Pawn => pawn_moves(board, from, us, &mut push),
            PieceKind::Knight => {
                for &(df, dr) in &KNIGHT_STEPS {
                    if let Some(to) = from.offset(df, dr) {
                        step_to(to, &mut push);
                    }
                }
            }
            PieceKind::King => {
                for &(df, dr) in &KING_STEPS {
                    if let Some(to) = from.offset(df, dr) {
                        step_to(to, &mut push);
                    }
                }
                castle_moves(board, from, us, &mut push);
            }
            kind => {
                let dirs: &[(i8, i8)] = match kind {
                    PieceKind::Bishop => &BISHOP_DIRS,
                    PieceKind::Rook => &ROOK_DIRS,
                    _ => &[
                        (1, 0),
                        (-1, 0),
                        (0, 1),
                        (0, -1),
                        (1, 1),
                        (1, -1),
                        (-1, 1),
                        (-1, -1),
                    ],
                };
                let mut targets = Vec::new();
                slider_hits(board, from, dirs, |sq| targets.push(sq));
                for to in targets {
                    step_to(to, &mut push);
                }
            }
        }
    }
    // Expand pawn moves to the back rank into the four promotions.
    let mut out = Vec::with_capacity(moves.len());
    for m in moves {
        if m.piece.kind == PieceKind::Pawn && (m.to.rank() == 0 || m.to.rank() == 7) {
            for promo in [
                PieceKind::Queen,
                PieceKind::Rook,
                PieceKind::Bishop,
                PieceKind::Knight,
            ] {
                out.push(Move {
                    promotion: Some(promo),
                    ..m
                });
            }
        } else {
            out.push(m);
        }
    }
    out
}

fn pawn_moves(board: &BoardState, from: Square, us: Color, push: &mut impl FnMut(Square, MoveKind)) {
    let step = us.pawn_step();
    let start_rank = if us == Color::White { 1 } else { 6 };
    if let Some(one) = from.offset(0, step) {
        if board.get(one).is_none() {
            push(one, MoveKind::Normal);
            if from.rank() == start_rank {
                if let Some(two) = from.offset(0, 2 * step) {
                    if board.get(two).is_none() {
                        push(two, MoveKind::DoublePush);
                    }
                }
            }
        }
    }
    for df in [-1, 1] {
        if let Some(to) = from.offset(df, step) {
            match board.get(to) {
                Some(p) if p.color != us => push(to, MoveKind::Normal),
                None if board.en_passant == Some(to) => {
                    // Only a real en passant when an enemy pawn sits behind the target.
                    let victim = to.offset(0, -step);
                    if victim
                        .and_then(|v| board.get(v))
                        .is_some_and(|p| p == Piece::new(PieceKind::Pawn, us.opposite()))
                    {
                        push(to, MoveKind::EnPassant);
                    }
                }
                _ => {}
            }
        }
    }
}

fn castle_moves(board: &BoardState, from: Square, us: Color, push: &mut impl FnMut(Square, MoveKind)) {
    let home = if us == Color::White { 0 } else { 7 };
    if from != Square::at(4, home) {
        return;
    }
    let them = us.opposite();
    let rook = Some(Piece::new(PieceKind::Rook, us));
    let empty = |files: &[u8]| files.iter().all(|&f| board.get(Square::at(f, home)).is_none());
    let safe = |files: &[u8]| {
        files
            .iter()
            .all(|&f| !is_square_attacked(board, Square::at(f, home), them))
    };
    if board.castling.king_side(us)
        && board.get(Square::at(7, home)) == rook
        && empty(&[5, 6])
        && safe(&[4, 5, 6])
    {
        push(Square::at(6, home), MoveKind::CastleKingSide);
    }
    if board.castling.queen_side(us)
        && board.get(Square::at(0, home)) == rook
        && empty(&[1, 2, 3])
        && safe(&[4, 3, 2])
    {
        push(Square::at(2, home), MoveKind::CastleQueenSide);
    }
}

/// Apply a move produced by the generator. No legality check is done here.
pub fn make_move(board: &BoardState, m: &Move) -> BoardState {
    let us = board.side_to_move;
    let mut next = board.clone();
    next.set(m.from, None);
    let placed = match m.promotion {
        Some(kind) => Piece::new(kind, us),
        None => m.piece,
    };
    next.set(m.to, Some(placed));
    match m.kind {
        MoveKind::EnPassant => {
            let victim = m.to.offset(0, -us.pawn_step()).expect("en passant victim on board");
            next.set(victim, None);
        }
        MoveKind::CastleKingSide | MoveKind::CastleQueenSide => {
            let home = m.from.rank();
            let (rook_from, rook_to) = if m.kind == MoveKind::CastleKingSide {
                (7, 5)
            } else {
                (0, 3)
            };
            let rook = next.get(Square::at(rook_from, home));
            next.set(Square::at(rook_from, home), None);
            next.set(Square::at(rook_to, home), rook);
        }
        _ => {}
    }

    if m.piece.kind == PieceKind::King {
        next.castling.clear(us);
    }
    next.castling.clear_rook_square(m.from);
    next.castling.clear_rook_square(m.to);

    next.en_passant = match m.kind {
        MoveKind::DoublePush => m.from.offset(0, us.pawn_step()),
        _ => None,
    };
    if m.piece.kind == PieceKind::Pawn || m.captured.is_some() {
        next.halfmove_clock = 0;
    } else {
        next.halfmove_clock += 1;
    }
    if us == Color::Black {
        next.fullmove_number += 1;
    }
    next.side_to_move = us.opposite();
    next
}

pub fn legal_moves(board: &BoardState) -> Vec<Move> {
    let us = board.side_to_move;
    pseudo_legal_moves(board)
        .into_iter()
        .filter(|m| !is_in_check(&make_move(board, m), us))
        .collect()
}
