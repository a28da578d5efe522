use xtinyunet_core::family::net_config;
use xtinyunet_core::oracle::{gradient_check, random_input};
use xtinyunet_core::{input_gradient, FamilyConfig, InputDifferentiable, NetworkInstance, Tensor};

fn tiny_family() -> FamilyConfig {
    FamilyConfig {
        base_channels: 4,
        max_channels_base: 16,
        stages: 3,
        in_channels: 1,
        out_classes: 2,
        input_size: (16, 16),
    }
}

#[test]
fn tiny_unet_gradient_matches_finite_differences() {
    let fc = tiny_family();
    for i in 0..fc.family_size() {
        let cfg = net_config(&fc, i).unwrap();
        let net = NetworkInstance::init(&cfg, &fc, 100 + i as u64).unwrap();
        let x = random_input(&[1, 1, 16, 16], 7 + i as u64);
        let check = gradient_check(&net, &x, 50, 1e-4, i as u64).unwrap();
        assert_eq!(check.samples.len(), 50, "ran out of smooth positions");
        assert!(
            check.max_rel_err < 1e-5,
            "cap index {i}: max rel err {:.3e}",
            check.max_rel_err
        );
    }
}

#[test]
fn multi_channel_input_gradient() {
    let fc = FamilyConfig {
        in_channels: 3,
        out_classes: 4,
        ..tiny_family()
    };
    let net = NetworkInstance::init(&net_config(&fc, 1).unwrap(), &fc, 3).unwrap();
    let x = random_input(&[2, 3, 16, 16], 8);
    let check = gradient_check(&net, &x, 30, 1e-4, 1).unwrap();
    assert!(check.max_rel_err < 1e-5, "{:.3e}", check.max_rel_err);
}

#[test]
fn batched_gradient_is_concatenation_of_single_gradients() {
    let fc = tiny_family();
    let net = NetworkInstance::init(&net_config(&fc, 0).unwrap(), &fc, 5).unwrap();
    let x = random_input(&[2, 1, 16, 16], 9);
    let batched = input_gradient(&net, &x).unwrap();
    let singles: Vec<Tensor> = (0..2)
        .map(|k| input_gradient(&net, &x.batch_item(k).unwrap()).unwrap())
        .collect();
    let joined = Tensor::stack_batch(&singles).unwrap();
    for (a, b) in batched.data().iter().zip(joined.data()) {
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn tape_covers_every_layer() {
    let fc = tiny_family();
    let net = NetworkInstance::init(&net_config(&fc, 0).unwrap(), &fc, 5).unwrap();
    let (_, tape) = net
        .forward_taped(&random_input(&[1, 1, 16, 16], 1))
        .unwrap();
    // 3 encoder + 2 decoder stages of two conv/norm/act blocks, 2 upsamples,
    // 2 concats, one head.
    assert_eq!(tape.len(), 5 * 2 * 3 + 2 + 2 + 1);
    assert_eq!(tape.activation_inputs().count(), 10);
}
