use super::{DynamicMask, LabelMap, MaskError};

/// COCO ids treated as dynamic: person, vehicles, animals, accessories,
/// sports equipment and teddy bear.
pub fn is_dynamic_class(id: u16) -> bool {
    matches!(id, 1 | 2..=9 | 16..=25 | 26..=33 | 34..=43 | 88)
}

/// Hand-object touch classes counted as held (moving with the hand).
pub fn is_held_touch_class(class: u8) -> bool {
    matches!(class, 1 | 2 | 4 | 6)
}

pub fn semantic_class_filter(labels: &LabelMap, frame_index: u32) -> DynamicMask {
    DynamicMask {
        frame_index,
        width: labels.width,
        height: labels.height,
        bits: labels.ids.iter().map(|&id| is_dynamic_class(id)).collect(),
    }
}

/// Union of the region masks whose touch class is a held class.
/// `width`/`height` size the result when no region qualifies.
pub fn interaction_touch_filter(
    regions: &[(DynamicMask, u8)],
    frame_index: u32,
    width: u32,
    height: u32,
) -> Result<DynamicMask, MaskError> {
    let mut out = DynamicMask::empty(frame_index, width, height);
    for (m, class) in regions {
        m.check_dims(width, height)?;
        if is_held_touch_class(*class) {
            for (o, &b) in out.bits.iter_mut().zip(&m.bits) {
                *o |= b;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(id: u16) -> LabelMap {
        LabelMap { width: 5, height: 4, ids: vec![id; 20] }
    }

    #[test]
    fn class_membership() {
        assert!(semantic_class_filter(&uniform(1), 0).bits.iter().all(|&b| b));
        assert!(semantic_class_filter(&uniform(100), 0).is_empty());
        for id in [1, 2, 9, 16, 25, 26, 33, 34, 43, 88] {
            assert!(is_dynamic_class(id), "{id}");
        }
        for id in [0, 10, 15, 44, 87, 89, 100] {
            assert!(!is_dynamic_class(id), "{id}");
        }
    }

    #[test]
    fn mixed_map_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let ids: Vec<u16> = (0..64 * 48).map(|_| rng.random_range(0..120)).collect();
        let map = LabelMap { width: 64, height: 48, ids: ids.clone() };
        let listed: Vec<u16> = [1u16].into_iter().chain(2..=9).chain(16..=25).chain(26..=33).chain(34..=43).chain([88]).collect();
        let expected = ids.iter().filter(|id| listed.contains(id)).count();
        assert_eq!(semantic_class_filter(&map, 0).count(), expected);
    }

    #[test]
    fn permuting_pixels_permutes_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let ids: Vec<u16> = (0..100).map(|_| rng.random_range(0..100)).collect();
        let rev: Vec<u16> = ids.iter().rev().copied().collect();
        let a = semantic_class_filter(&LabelMap { width: 10, height: 10, ids }, 0);
        let b = semantic_class_filter(&LabelMap { width: 10, height: 10, ids: rev }, 0);
        let a_rev: Vec<bool> = a.bits.iter().rev().copied().collect();
        assert_eq!(a_rev, b.bits);
    }

    fn region(x: u32) -> DynamicMask {
        let mut m = DynamicMask::empty(0, 8, 2);
        m.set(x, 0, true);
        m
    }

    #[test]
    fn touch_classes() {
        assert!(interaction_touch_filter(&[(region(0), 3)], 0, 8, 2).unwrap().is_empty());
        assert_eq!(interaction_touch_filter(&[(region(1), 4)], 0, 8, 2).unwrap(), region(1));
        let got = interaction_touch_filter(&[(region(1), 1), (region(2), 3), (region(3), 6)], 0, 8, 2).unwrap();
        let mut want = region(1);
        want.set(3, 0, true);
        assert_eq!(got, want);
        assert!(interaction_touch_filter(&[(region(1), 5)], 0, 8, 2).unwrap().is_empty());
    }
}
