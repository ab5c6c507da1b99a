//! Bounded fan-out for pure per-item work. Output order always matches input
//! order, so parallel execution cannot perturb canonical artifacts.

/// Map `f` over `items` with at most `max_workers` OS threads. `f` must be a
/// pure function of its item (all substream seeds derived per item), which
/// makes the result independent of the schedule.
pub fn ordered_map<T, U, F>(items: &[T], max_workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let workers = max_workers.max(1).min(items.len().max(1));
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }

    let chunk = items.len().div_ceil(workers);
    let mut out: Vec<Option<U>> = Vec::with_capacity(items.len());
    out.resize_with(items.len(), || None);

    std::thread::scope(|scope| {
        let f = &f;
        let mut rest: &mut [Option<U>] = &mut out;
        let mut offset = 0;
        while offset < items.len() {
            let take = chunk.min(items.len() - offset);
            let (slot, tail) = rest.split_at_mut(take);
            rest = tail;
            let input = &items[offset..offset + take];
            scope.spawn(move || {
                for (dst, item) in slot.iter_mut().zip(input) {
                    *dst = Some(f(item));
                }
            });
            offset += take;
        }
    });

    out.into_iter().map(|v| v.expect("every slot filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_input_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = ordered_map(&items, 1, |x| x * 3 + 1);
        let par = ordered_map(&items, 8, |x| x * 3 + 1);
        assert_eq!(seq, par);
    }

    #[test]
    fn handles_empty_and_singleton() {
        let empty: Vec<u32> = vec![];
        assert!(ordered_map(&empty, 4, |x| *x).is_empty());
        assert_eq!(ordered_map(&[5u32], 4, |x| x + 1), vec![6]);
    }
}
