use super::ProtocolError;
use crate::ids::MsspId;

/// Decides whether an SC must start handing off.
///
/// `cells` are sorted by start. The current cell is the first one containing
/// `position` (the last one when travelling backwards). Returns the next
/// cell's MSSP in the direction of travel if the position projected
/// `lead_time` ahead leaves the current cell.
pub fn plan_handoff(
    cells: &[(MsspId, (f64, f64))],
    position: f64,
    velocity: f64,
    lead_time: f64,
) -> Result<Option<MsspId>, ProtocolError> {
    let inside = |&(_, (a, b)): &(MsspId, (f64, f64))| a <= position && position <= b;
    let current = if velocity >= 0.0 { cells.iter().position(inside) } else { cells.iter().rposition(inside) }
        .ok_or(ProtocolError::OutOfCorridor(position))?;
    let projected = position + velocity * lead_time;
    let (lo, hi) = cells[current].1;
    let next = if projected > hi {
        cells.get(current + 1)
    } else if projected < lo {
        current.checked_sub(1).and_then(|k| cells.get(k))
    } else {
        None
    };
    Ok(next.map(|c| c.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells() -> Vec<(MsspId, (f64, f64))> {
        vec![(MsspId(1), (0.0, 500.0)), (MsspId(2), (450.0, 950.0))]
    }

    #[test]
    fn projection_inside_cell_needs_no_handoff() {
        assert_eq!(plan_handoff(&cells(), 430.0, 20.0, 2.0), Ok(None));
    }

    #[test]
    fn projection_past_cell_end_targets_next() {
        assert_eq!(plan_handoff(&cells(), 480.0, 20.0, 2.0), Ok(Some(MsspId(2))));
    }

    #[test]
    fn outside_all_cells_is_an_error() {
        assert_eq!(plan_handoff(&cells(), 990.0, 0.0, 2.0), Err(ProtocolError::OutOfCorridor(990.0)));
    }

    #[test]
    fn last_cell_has_nowhere_to_go() {
        assert_eq!(plan_handoff(&cells(), 940.0, 20.0, 2.0), Ok(None));
    }

    #[test]
    fn reverse_travel_targets_previous() {
        assert_eq!(plan_handoff(&cells(), 470.0, -20.0, 2.0), Ok(Some(MsspId(1))));
    }
}
