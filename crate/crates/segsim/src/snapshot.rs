//! Snapshot text format and image rendering.
//!
//! A snapshot is one line per grid row (`y = 0` first), each character one
//! cell: `.` empty, `A` or `B` an occupant. Rendering produces a binary
//! portable graymap (PGM, `P5`, maxval 255): empty cells white (255),
//! type A black (0), type B mid-gray (128), pixels row-major.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnapshotError {
    #[error("snapshot is empty")]
    Empty,
    #[error("line {line} has {got} cells, expected {want}")]
    RaggedRow { line: usize, got: usize, want: usize },
    #[error("line {line} contains illegal cell symbol `{symbol}`")]
    BadSymbol { line: usize, symbol: char },
}

/// Cell content as read from a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellSym {
    Empty,
    TypeA,
    TypeB,
}

/// A parsed snapshot: rectangular, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<CellSym>,
}

pub fn parse_snapshot(text: &str) -> Result<Snapshot, SnapshotError> {
    let mut cells = Vec::new();
    let mut width = None;
    let mut height = 0usize;
    for (i, line) in text.lines().enumerate() {
        let row: Vec<CellSym> = line
            .chars()
            .map(|c| match c {
                '.' => Ok(CellSym::Empty),
                'A' => Ok(CellSym::TypeA),
                'B' => Ok(CellSym::TypeB),
                symbol => Err(SnapshotError::BadSymbol { line: i + 1, symbol }),
            })
            .collect::<Result<_, _>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(SnapshotError::RaggedRow { line: i + 1, got: row.len(), want: w })
            }
            _ => {}
        }
        cells.extend(row);
        height += 1;
    }
    let width = width.filter(|&w| w > 0).ok_or(SnapshotError::Empty)?;
    Ok(Snapshot { width, height, cells })
}

/// Byte-exact PGM encoding: header `P5\n{width} {height}\n255\n` followed
/// by one byte per cell.
pub fn snapshot_to_pgm(snapshot: &Snapshot) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", snapshot.width, snapshot.height).into_bytes();
    out.extend(snapshot.cells.iter().map(|c| match c {
        CellSym::Empty => 255u8,
        CellSym::TypeA => 0u8,
        CellSym::TypeB => 128u8,
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_rectangular_snapshot() {
        let s = parse_snapshot("A.B\n...\n").unwrap();
        assert_eq!((s.width, s.height), (3, 2));
        assert_eq!(s.cells[0], CellSym::TypeA);
        assert_eq!(s.cells[2], CellSym::TypeB);
        assert_eq!(s.cells[3], CellSym::Empty);
    }

    #[test]
    fn rejects_ragged_and_foreign_input() {
        assert!(matches!(parse_snapshot(""), Err(SnapshotError::Empty)));
        assert!(matches!(parse_snapshot("AB\nA\n"), Err(SnapshotError::RaggedRow { line: 2, .. })));
        assert!(matches!(
            parse_snapshot("AX\n"),
            Err(SnapshotError::BadSymbol { line: 1, symbol: 'X' })
        ));
    }

    #[test]
    fn empty_snapshot_renders_all_white() {
        let s = parse_snapshot("...\n...\n").unwrap();
        let pgm = snapshot_to_pgm(&s);
        assert_eq!(&pgm[..9], b"P5\n3 2\n255\n".get(..9).unwrap());
        assert_eq!(&pgm[pgm.len() - 6..], &[255u8; 6]);
    }

    #[test]
    fn pgm_bytes_are_pinned() {
        let s = parse_snapshot("A.\n.B\n").unwrap();
        assert_eq!(snapshot_to_pgm(&s), [b"P5\n2 2\n255\n" as &[u8], &[0, 255, 255, 128]].concat());
    }

    #[test]
    fn grid_text_round_trips_through_the_parser() {
        use crate::grid::{AgentKind, Grid, Pos, Topology};
        let mut grid = Grid::empty(4, 3, Topology::Torus).unwrap();
        grid.place_agent(AgentKind::A, Pos::new(0, 0), 0.0, 0).unwrap();
        grid.place_agent(AgentKind::B, Pos::new(3, 2), 0.0, 0).unwrap();
        let snapshot = parse_snapshot(&grid.to_text()).unwrap();
        assert_eq!((snapshot.width, snapshot.height), (4, 3));
        assert_eq!(snapshot.cells[0], CellSym::TypeA);
        assert_eq!(snapshot.cells[11], CellSym::TypeB);
    }
}
