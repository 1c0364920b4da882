use proptest::prelude::*;

use rave_core::dataset::{
    summarize, DatasetManifest, EditType, MotionTag, PromptEntry, Resolution, VideoEntry,
};
use rave_core::diffusion::{
    ddim_denoise_step, ddim_invert_step, DiffusionSchedule, ScheduleConfig, Spacing, StepId,
};
use rave_core::grid::{
    grid2video, invert_permutation, plan_padding, sample_permutation, video2grid, GridLayout,
    Permutation, PermutationRng,
};
use rave_core::{Shape, Tensor};

fn frames(k: usize, shape: Shape) -> Vec<Tensor> {
    (0..k)
        .map(|i| {
            Tensor::from_fn(shape, |y, x, c| {
                (i * 1000 + y * 100 + x * 10 + c) as f64 + 0.25
            })
        })
        .collect()
}

prop_compose! {
    fn grid_case()(k in 1usize..=60, rows in 1usize..=5, cols in 1usize..=5, h in 1usize..=3, w in 1usize..=3)
        (order in Just((0..plan_padding(k, rows * cols).unwrap().padded).collect::<Vec<_>>()).prop_shuffle(),
         k in Just(k), rows in Just(rows), cols in Just(cols), h in Just(h), w in Just(w))
        -> (usize, GridLayout, Vec<usize>)
    {
        (k, GridLayout::new(rows, cols, h, w).unwrap(), order)
    }
}

proptest! {
    #[test]
    fn grid_round_trip_is_exact((k, layout, order) in grid_case()) {
        let cells = frames(k, layout.cell_shape(2));
        let batch = video2grid(&cells, &layout, &order).unwrap();
        prop_assert_eq!(grid2video(&batch).unwrap(), cells);
    }

    #[test]
    fn grids_partition_the_padded_frames((k, layout, order) in grid_case()) {
        let cells = frames(k, layout.cell_shape(1));
        let batch = video2grid(&cells, &layout, &order).unwrap();
        let mut seen: Vec<usize> = batch.assignment.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..order.len()).collect::<Vec<_>>());
        prop_assert!(batch.padded_frames() - k < layout.cells());
    }

    #[test]
    fn sampled_orders_are_bijections(seed in any::<u64>(), padded in 1usize..200) {
        let mut rng = PermutationRng::new(seed);
        let p = sample_permutation(&mut rng, padded, 981);
        let checked = Permutation::from_forward(p.forward.clone(), p.timestep, seed).unwrap();
        let round = checked.compose(&invert_permutation(&checked)).unwrap();
        prop_assert!(round.is_identity());
    }

    #[test]
    fn same_seed_same_orders(seed in any::<u64>()) {
        let (mut a, mut b) = (PermutationRng::new(seed), PermutationRng::new(seed));
        for t in [981, 961, 941] {
            prop_assert_eq!(sample_permutation(&mut a, 36, t), sample_permutation(&mut b, 36, t));
        }
    }

    #[test]
    fn ddim_steps_invert_each_other(
        values in prop::collection::vec(-3.0f64..3.0, 12),
        eps in prop::collection::vec(-2.0f64..2.0, 12),
        steps in 1usize..60,
        trailing in any::<bool>(),
    ) {
        let schedule = DiffusionSchedule::from_config(&ScheduleConfig {
            steps,
            spacing: if trailing { Spacing::Trailing } else { Spacing::Leading },
            ..ScheduleConfig::default()
        }).unwrap();
        let shape = Shape::new(2, 2, 3);
        let z0 = Tensor::from_vec(shape, values).unwrap();
        let e = Tensor::from_vec(shape, eps).unwrap();
        let t = StepId::Noisy(schedule.timesteps()[0]);
        let up = ddim_invert_step(&z0, &e, StepId::Clean, t, &schedule).unwrap();
        let down = ddim_denoise_step(&up, &e, t, StepId::Clean, &schedule).unwrap();
        prop_assert!(down.max_abs_diff(&z0).unwrap() < 1e-9);
    }

    #[test]
    fn summary_ignores_entry_order(order in Just((0..12).collect::<Vec<usize>>()).prop_shuffle()) {
        let entries: Vec<VideoEntry> = (0..12)
            .map(|i| VideoEntry {
                id: format!("v{i}"),
                source: format!("v{i}.mp4"),
                frame_count: [8, 36, 90][i % 3],
                resolution: Resolution { width: 64, height: 64 },
                motion_tags: vec![MotionTag::ALL[i % 5]],
                prompts: (0..=i % 4)
                    .map(|j| PromptEntry { text: format!("p{j}"), edit_type: EditType::ALL[(i + j) % 5] })
                    .collect(),
            })
            .collect();
        let manifest = |entries| DatasetManifest { name: "m".into(), version: "1".into(), entries };
        let shuffled = order.iter().map(|&i| entries[i].clone()).collect();
        prop_assert_eq!(summarize(&manifest(entries)), summarize(&manifest(shuffled)));
    }
}
