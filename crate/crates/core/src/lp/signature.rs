use std::hash::{DefaultHasher, Hash, Hasher};

/// Sorted active rows of one solve plus the identity tag of its LP shape.
///
/// Equality compares the full row list, the cached hash is only a fast
/// pre-check and a printable digest.
#[derive(Debug, Clone)]
pub struct ActiveSetSignature {
    tag: u64,
    rows: Vec<usize>,
    digest: u64,
}

impl ActiveSetSignature {
    pub fn new(tag: u64, mut rows: Vec<usize>) -> Self {
        rows.sort_unstable();
        rows.dedup();
        let mut h = DefaultHasher::new();
        tag.hash(&mut h);
        rows.hash(&mut h);
        ActiveSetSignature {
            tag,
            rows,
            digest: h.finish(),
        }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }
}

impl PartialEq for ActiveSetSignature {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest && self.tag == other.tag && self.rows == other.rows
    }
}

impl Eq for ActiveSetSignature {}

impl Hash for ActiveSetSignature {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.digest.hash(state);
    }
}

impl std::fmt::Display for ActiveSetSignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}/{}", self.digest, self.rows.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_insensitive() {
        assert_eq!(
            ActiveSetSignature::new(7, vec![3, 1, 2]),
            ActiveSetSignature::new(7, vec![1, 2, 3])
        );
    }

    #[test]
    fn tag_and_rows_matter() {
        let a = ActiveSetSignature::new(7, vec![1, 2]);
        assert_ne!(a, ActiveSetSignature::new(8, vec![1, 2]));
        assert_ne!(a, ActiveSetSignature::new(7, vec![1, 3]));
    }
}
