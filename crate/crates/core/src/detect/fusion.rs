//! The two box-reduction steps of tiled inference: weighted box fusion inside
//! a tile, then enclosing-box merging of touching or overlapping boxes across
//! the whole image.

use std::cmp::Ordering;

use super::Detection;
use crate::geometry::BoundingBox;

/// Descending score, then top-left position.
pub(crate) fn by_score_then_position(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x.total_cmp(&b.bbox.x))
        .then(a.bbox.y.total_cmp(&b.bbox.y))
}

struct FusionGroup {
    members: Vec<Detection>,
    fused: BoundingBox,
}

impl FusionGroup {
    fn refresh(&mut self) {
        let total: f64 = self.members.iter().map(|d| d.score).sum();
        let weight = |d: &Detection| if total > 0.0 { d.score / total } else { 1.0 / self.members.len() as f64 };
        let (mut x0, mut y0, mut x1, mut y1) = (0.0, 0.0, 0.0, 0.0);
        for d in &self.members {
            let w = weight(d);
            x0 += w * d.bbox.x;
            y0 += w * d.bbox.y;
            x1 += w * d.bbox.x1();
            y1 += w * d.bbox.y1();
        }
        self.fused = BoundingBox::from_corners(x0, y0, x1, y1, self.members[0].bbox.frame);
    }

    fn into_detection(self) -> Detection {
        let n = self.members.len();
        let score = self.members.iter().map(|d| d.score).sum::<f64>() / n as f64;
        let first = &self.members[0];
        Detection {
            bbox: self.fused,
            score,
            label: first.label.clone(),
            tile_index: first.tile_index,
            contributors: self.members.iter().map(|d| d.contributors).sum(),
        }
    }
}

/// Greedy weighted box fusion. Boxes are visited by descending score and join
/// the group whose running fused box they overlap best, if that IoU reaches
/// `iou_threshold`. Fused corners are score-weighted means; the fused score is
/// the plain mean of member scores.
pub fn weighted_box_fusion(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| by_score_then_position(a, b));

    let mut groups: Vec<FusionGroup> = Vec::new();
    for d in order {
        let best = groups
            .iter()
            .enumerate()
            .map(|(i, g)| (i, g.fused.iou(&d.bbox)))
            .filter(|&(_, iou)| iou >= iou_threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((i, _)) => {
                groups[i].members.push(d.clone());
                groups[i].refresh();
            }
            None => groups.push(FusionGroup { members: vec![d.clone()], fused: d.bbox }),
        }
    }
    groups.into_iter().map(FusionGroup::into_detection).collect()
}

/// True when the boxes share positive area or a boundary segment of positive
/// length. Corner-only contact does not count.
pub fn boxes_connect(a: &BoundingBox, b: &BoundingBox) -> bool {
    let (iw, ih) = a.intersection_extents(b);
    iw >= 0.0 && ih >= 0.0 && (iw > 0.0 || ih > 0.0)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn merge_pass(dets: &[Detection]) -> Vec<Detection> {
    let n = dets.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if boxes_connect(&dets[i].bbox, &dets[j].bbox) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    // keep the smaller index as root so output order is stable
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut out: Vec<Option<Detection>> = vec![None; n];
    for (i, d) in dets.iter().enumerate() {
        let r = find(&mut parent, i);
        match &mut out[r] {
            None => out[r] = Some(d.clone()),
            Some(acc) => {
                acc.bbox = acc.bbox.union_hull(&d.bbox);
                if d.score > acc.score {
                    acc.score = d.score;
                    acc.label = d.label.clone();
                }
                if acc.tile_index != d.tile_index {
                    acc.tile_index = None;
                }
                acc.contributors += d.contributors;
            }
        }
    }
    out.into_iter().flatten().collect()
}

/// Replaces each connected group of touching/overlapping boxes by its
/// enclosing box (score = max, contributors summed), repeated to a fixpoint.
pub fn merge_overlapping(dets: &[Detection]) -> Vec<Detection> {
    let mut current = dets.to_vec();
    loop {
        let next = merge_pass(&current);
        if next.len() == current.len() {
            return next;
        }
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;

    fn det(x: f64, y: f64, w: f64, h: f64, score: f64) -> Detection {
        Detection::new(BoundingBox::new(x, y, w, h, Frame::Image), score)
    }

    #[test]
    fn wbf_singleton_is_identity() {
        let d = det(1.0, 2.0, 3.0, 4.0, 0.7);
        assert_eq!(weighted_box_fusion(std::slice::from_ref(&d), 0.55), vec![d]);
    }

    #[test]
    fn wbf_identical_boxes_average_score() {
        let out = weighted_box_fusion(&[det(5.0, 5.0, 10.0, 10.0, 0.6), det(5.0, 5.0, 10.0, 10.0, 0.8)], 0.55);
        assert_eq!(out.len(), 1);
        assert!((out[0].score - 0.7).abs() < 1e-12);
        assert_eq!(out[0].contributors, 2);
        let b = out[0].bbox;
        assert!((b.x - 5.0).abs() < 1e-12 && (b.w - 10.0).abs() < 1e-12);
    }

    #[test]
    fn wbf_weighted_corners() {
        // same height, x shifted by 2: IoU = 8*10 / (2*100 - 80) = 0.667
        let out = weighted_box_fusion(&[det(0.0, 0.0, 10.0, 10.0, 0.75), det(2.0, 0.0, 10.0, 10.0, 0.25)], 0.55);
        assert_eq!(out.len(), 1);
        assert!((out[0].bbox.x - 0.5).abs() < 1e-12);
        assert!((out[0].bbox.x1() - 10.5).abs() < 1e-12);
    }

    #[test]
    fn wbf_disjoint_boxes_stay_apart() {
        let out = weighted_box_fusion(&[det(0.0, 0.0, 10.0, 10.0, 0.9), det(10.5, 0.0, 10.0, 10.0, 0.3)], 0.55);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn merge_leaves_separated_boxes_alone() {
        let d = vec![det(0.0, 0.0, 5.0, 5.0, 0.5), det(10.0, 0.0, 5.0, 5.0, 0.6), det(0.0, 10.0, 5.0, 5.0, 0.7)];
        assert_eq!(merge_overlapping(&d), d);
    }

    #[test]
    fn merge_nested_pair() {
        let out = merge_overlapping(&[det(0.0, 0.0, 20.0, 20.0, 0.4), det(5.0, 5.0, 2.0, 2.0, 0.9)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, BoundingBox::image(0.0, 0.0, 20.0, 20.0));
        assert_eq!(out[0].score, 0.9);
        assert_eq!(out[0].contributors, 2);
    }

    #[test]
    fn merge_joins_boxes_sharing_a_tile_seam() {
        let out = merge_overlapping(&[det(500.0, 40.0, 12.0, 20.0, 1.0), det(512.0, 40.0, 8.0, 20.0, 1.0)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, BoundingBox::image(500.0, 40.0, 20.0, 20.0));
    }

    #[test]
    fn corner_contact_does_not_merge() {
        let d = vec![det(0.0, 0.0, 5.0, 5.0, 0.5), det(5.0, 5.0, 5.0, 5.0, 0.6)];
        assert_eq!(merge_overlapping(&d).len(), 2);
    }

    #[test]
    fn hull_can_create_new_overlap() {
        // A and B overlap; their hull reaches C, which touches neither alone
        let d = vec![det(0.0, 0.0, 10.0, 2.0, 0.5), det(8.0, 0.0, 2.0, 10.0, 0.5), det(1.0, 5.0, 2.0, 2.0, 0.5)];
        let out = merge_overlapping(&d);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].contributors, 3);
    }
}
