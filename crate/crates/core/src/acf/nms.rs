use std::cmp::Ordering;

use super::Proposal;

/// Greedy non-maximum suppression.
///
/// Proposals are visited by descending score (ties: smaller x first, then
/// smaller y); one is kept iff its IoU with every already kept proposal is at
/// most `overlap_threshold`. Output is in visiting order.
pub fn nms(props: &[Proposal], overlap_threshold: f64) -> Vec<Proposal> {
    let mut order: Vec<&Proposal> = props.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.bbox.x.total_cmp(&b.bbox.x))
            .then(a.bbox.y.total_cmp(&b.bbox.y))
    });
    let mut kept: Vec<Proposal> = Vec::new();
    for p in order {
        if kept.iter().all(|k| k.bbox.iou(&p.bbox) <= overlap_threshold) {
            kept.push(*p);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acf::BoundingBox;

    fn prop(x: f64, y: f64, s: f64) -> Proposal {
        Proposal {
            bbox: BoundingBox::new(x, y, 10.0, 10.0).unwrap(),
            score: s,
            level: 0,
        }
    }

    #[test]
    fn identical_boxes_keep_the_best() {
        let kept = nms(&[prop(0.0, 0.0, 1.0), prop(0.0, 0.0, 2.0)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 2.0);
    }

    #[test]
    fn disjoint_boxes_survive() {
        assert_eq!(nms(&[prop(0.0, 0.0, 1.0), prop(50.0, 0.0, 2.0)], 0.5).len(), 2);
    }

    #[test]
    fn ties_break_on_position() {
        let kept = nms(&[prop(3.0, 0.0, 1.0), prop(1.0, 0.0, 1.0)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].bbox.x, 1.0);
    }

    fn reference(props: &[Proposal], thr: f64) -> Vec<Proposal> {
        let mut pool: Vec<Proposal> = props.to_vec();
        let mut kept: Vec<Proposal> = Vec::new();
        while !pool.is_empty() {
            let mut best = 0;
            for i in 1..pool.len() {
                let (a, b) = (&pool[i], &pool[best]);
                let better = a.score > b.score
                    || (a.score == b.score && (a.bbox.x < b.bbox.x || (a.bbox.x == b.bbox.x && a.bbox.y < b.bbox.y)));
                if better {
                    best = i;
                }
            }
            let p = pool.remove(best);
            let mut ok = true;
            for k in &kept {
                let ix = (p.bbox.x + p.bbox.w).min(k.bbox.x + k.bbox.w) - p.bbox.x.max(k.bbox.x);
                let iy = (p.bbox.y + p.bbox.h).min(k.bbox.y + k.bbox.h) - p.bbox.y.max(k.bbox.y);
                let inter = ix.max(0.0) * iy.max(0.0);
                let union = p.bbox.w * p.bbox.h + k.bbox.w * k.bbox.h - inter;
                if inter / union > thr {
                    ok = false;
                }
            }
            if ok {
                kept.push(p);
            }
        }
        kept
    }

    proptest::proptest! {
        #[test]
        fn matches_quadratic_reference(
            boxes in proptest::collection::vec((0u8..40, 0u8..40, 4u8..30, 4u8..30, 0u8..6), 0..20),
            thr in 0.1f64..0.9,
        ) {
            let props: Vec<Proposal> = boxes
                .iter()
                .map(|&(x, y, w, h, s)| Proposal {
                    bbox: BoundingBox::new(x as f64, y as f64, w as f64, h as f64).unwrap(),
                    score: s as f64,
                    level: 0,
                })
                .collect();
            let kept = nms(&props, thr);
            proptest::prop_assert_eq!(&kept, &reference(&props, thr));
            for (i, a) in kept.iter().enumerate() {
                for b in &kept[i + 1..] {
                    proptest::prop_assert!(a.bbox.iou(&b.bbox) <= thr);
                }
            }
        }
    }
}
