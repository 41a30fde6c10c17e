//! PGN import. Records are split lexically first so a broken game can be
//! reported and skipped without losing the games that follow it.

use std::io::BufRead;

use super::board::BoardState;
use super::movegen::make_move;
use super::san::{apply_san, MoveRecord};
use super::ChessError;

/// One game: header tags, the replayed mainline and its starting position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Game {
    pub tags: Vec<(String, String)>,
    pub moves: Vec<MoveRecord>,
    pub initial: BoardState,
}

impl Game {
    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Positions before each ply, paired with the move played from them.
    pub fn plies(&self) -> impl Iterator<Item = (BoardState, &MoveRecord)> + '_ {
        let mut board = self.initial.clone();
        self.moves.iter().map(move |m| {
            let before = board.clone();
            board = make_move(&board, &m.as_move());
            (before, m)
        })
    }

    pub fn final_position(&self) -> BoardState {
        let mut board = self.initial.clone();
        for m in &self.moves {
            board = make_move(&board, &m.as_move());
        }
        board
    }
}

/// The raw text of one game record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawRecord {
    pub tag_text: String,
    pub movetext: String,
}

impl RawRecord {
    fn is_empty(&self) -> bool {
        self.tag_text.trim().is_empty() && self.movetext.trim().is_empty()
    }
}

/// Splits a PGN stream into records, one per game.
pub struct RecordSplitter<R> {
    reader: R,
    pending: Option<String>,
    done: bool,
}

impl<R: BufRead> RecordSplitter<R> {
    pub fn new(reader: R) -> Self {
        RecordSplitter {
            reader,
            pending: None,
            done: false,
        }
    }

    fn next_line(&mut self) -> std::io::Result<Option<String>> {
        if let Some(line) = self.pending.take() {
            return Ok(Some(line));
        }
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        Ok(Some(line))
    }
}

impl<R: BufRead> Iterator for RecordSplitter<R> {
    type Item = std::io::Result<RawRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut record = RawRecord::default();
        let mut in_movetext = false;
        let mut brace_depth = 0usize;
        loop {
            let line = match self.next_line() {
                Ok(Some(l)) => l,
                Ok(None) => {
                    self.done = true;
                    break;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            let trimmed = line.trim_start();
            if trimmed.starts_with('%') {
                continue;
            }
            if brace_depth == 0 && trimmed.starts_with('[') {
                if in_movetext {
                    self.pending = Some(line);
                    break;
                }
                record.tag_text.push_str(&line);
                continue;
            }
            if !trimmed.trim().is_empty() {
                in_movetext = true;
            }
            for c in line.chars() {
                match c {
                    '{' => brace_depth += 1,
                    '}' => brace_depth = brace_depth.saturating_sub(1),
                    _ => {}
                }
            }
            record.movetext.push_str(&line);
            let ends_game = line
                .split_whitespace()
                .last()
                .is_some_and(|t| matches!(t, "1-0" | "0-1" | "1/2-1/2" | "*"));
            if brace_depth == 0 && ends_game {
                break;
            }
        }
        if record.is_empty() {
            None
        } else {
            Some(Ok(record))
        }
    }
}

fn parse_tags(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut tags = Vec::new();
    let mut chars = text.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next() {
            None => break,
            Some('[') => {}
            Some(c) => return Err(format!("unexpected `{c}` in tag section")),
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() || c == '"' {
                break;
            }
            key.push(c);
            chars.next();
        }
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.next() != Some('"') {
            return Err(format!("tag `{key}` has no quoted value"));
        }
        let mut value = String::new();
        loop {
            match chars.next() {
                None => return Err(format!("unterminated value for tag `{key}`")),
                Some('\\') => {
                    if let Some(c) = chars.next() {
                        value.push(c);
                    }
                }
                Some('"') => break,
                Some(c) => value.push(c),
            }
        }
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.next() != Some(']') {
            return Err(format!("tag `{key}` is not closed"));
        }
        tags.push((key, value));
    }
    Ok(tags)
}

/// Mainline SAN tokens of a movetext section, with comments, NAGs,
/// variations, move numbers and the result token removed.
fn mainline_tokens(movetext: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut depth = 0usize;
    let mut chars = movetext.chars().peekable();
    let mut word = String::new();

    let flush = |word: &mut String, tokens: &mut Vec<String>, depth: usize| {
        if !word.is_empty() {
            if depth == 0 {
                tokens.push(std::mem::take(word));
            } else {
                word.clear();
            }
        }
    };

    while let Some(c) = chars.next() {
        match c {
            '{' => {
                flush(&mut word, &mut tokens, depth);
                let mut closed = false;
                for c in chars.by_ref() {
                    if c == '}' {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err("unterminated `{` comment".into());
                }
            }
            '}' => return Err("unbalanced `}`".into()),
            ';' => {
                flush(&mut word, &mut tokens, depth);
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' => {
                flush(&mut word, &mut tokens, depth);
                depth += 1;
            }
            ')' => {
                flush(&mut word, &mut tokens, depth);
                if depth == 0 {
                    return Err("unbalanced `)`".into());
                }
                depth -= 1;
            }
            c if c.is_whitespace() => flush(&mut word, &mut tokens, depth),
            c => word.push(c),
        }
    }
    flush(&mut word, &mut tokens, depth);
    if depth != 0 {
        return Err("unterminated variation".into());
    }

    let mut out = Vec::new();
    for tok in tokens {
        if tok.starts_with('$') {
            continue;
        }
        if matches!(tok.as_str(), "1-0" | "0-1" | "1/2-1/2" | "*") {
            continue;
        }
        // Strip a leading move number such as `12.` or `12...`.
        let stripped = tok.trim_start_matches(|c: char| c.is_ascii_digit());
        let rest = if stripped.len() < tok.len() && stripped.starts_with('.') {
            stripped.trim_start_matches('.')
        } else if tok.chars().all(|c| c == '.') {
            ""
        } else {
            tok.as_str()
        };
        // `!`, `?` annotations written as separate tokens.
        if rest.is_empty() || rest.chars().all(|c| c == '!' || c == '?') {
            continue;
        }
        out.push(rest.to_string());
    }
    Ok(out)
}

/// Parse and replay one record; `index` is the record's position in the stream.
pub fn parse_record(record: &RawRecord, index: usize) -> Result<Game, ChessError> {
    let malformed = |reason: String| ChessError::MalformedPgn {
        game: index,
        reason,
    };
    let tags = parse_tags(&record.tag_text).map_err(malformed)?;
    let initial = match tags.iter().find(|(k, _)| k == "FEN") {
        Some((_, fen)) => {
            let b = BoardState::from_fen(fen).map_err(|e| malformed(e.to_string()))?;
            b.validate().map_err(|e| malformed(e.to_string()))?;
            b
        }
        None => BoardState::starting(),
    };
    let sans = mainline_tokens(&record.movetext).map_err(malformed)?;
    let mut board = initial.clone();
    let mut moves = Vec::with_capacity(sans.len());
    for (ply, san) in sans.iter().enumerate() {
        let (next, rec) = apply_san(&board, san).map_err(|e| match e {
            ChessError::MalformedSan(tok) => malformed(format!("illegal SAN token `{tok}` at ply {ply}")),
            other => ChessError::InGame {
                game: index,
                ply,
                source: Box::new(other),
            },
        })?;
        moves.push(rec);
        board = next;
    }
    Ok(Game {
        tags,
        moves,
        initial,
    })
}

/// Streams games from a PGN source, yielding one result per record.
pub struct PgnReader<R> {
    splitter: RecordSplitter<R>,
    index: usize,
}

impl<R: BufRead> PgnReader<R> {
    pub fn new(reader: R) -> Self {
        PgnReader {
            splitter: RecordSplitter::new(reader),
            index: 0,
        }
    }
}

impl<R: BufRead> Iterator for PgnReader<R> {
    type Item = Result<Game, ChessError>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = self.splitter.next()?;
        let index = self.index;
        self.index += 1;
        Some(match record {
            Ok(r) => parse_record(&r, index),
            Err(e) => Err(ChessError::Io(e.to_string())),
        })
    }
}

/// Parse every game in `text`; the first bad game aborts with its error.
pub fn parse_pgn(text: &str) -> Result<Vec<Game>, ChessError> {
    PgnReader::new(text.as_bytes()).collect()
}
