use std::fmt;

/// Cardinal travel direction of a partial density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    N,
    E,
    W,
    S,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::N, Dir::E, Dir::W, Dir::S];

    #[inline]
    pub const fn index(self) -> usize {
        match self {
            Dir::N => 0,
            Dir::E => 1,
            Dir::W => 2,
            Dir::S => 3,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Dir::N => 'N',
            Dir::E => 'E',
            Dir::W => 'W',
            Dir::S => 'S',
        }
    }

    pub fn from_letter(c: char) -> Option<Dir> {
        match c.to_ascii_uppercase() {
            'N' => Some(Dir::N),
            'E' => Some(Dir::E),
            'W' => Some(Dir::W),
            'S' => Some(Dir::S),
            _ => None,
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// One value per cardinal direction, indexed by [`Dir::index`].
pub type PerDir<T> = [T; 4];

/// Turning matrix between cardinal directions: `m[from][to]`.
pub type DirMatrix = [[f64; 4]; 4];
