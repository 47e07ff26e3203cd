//! Layer shapes of a teacher spec next to those of its mirrored generator.

use sdn::nets::{GenStep, GeneratorLayout, NetSpec};

fn show(label: &str, spec: &NetSpec) {
    println!("== {label} teacher");
    print!("{}", spec.shape_report());
    let layout = GeneratorLayout::mirror(spec, 32, 1).expect("mirrorable spec");
    println!("== {label} generator");
    println!("fc widths {:?} → seed {:?}", layout.fc_widths, layout.seed_shape);
    let shapes = layout.step_shapes().unwrap();
    for (step, shape) in layout.steps.iter().zip(shapes) {
        let what = match step {
            GenStep::Upsample => "upsample ×2".to_string(),
            GenStep::Conv {
                name,
                in_channels,
                out_channels,
                ..
            } => format!("{name} {in_channels}→{out_channels}"),
        };
        println!("  {what:<20} {shape:?}");
    }
    for tap in &layout.taps {
        let teacher = spec.tap_shape(&tap.teacher_layer).unwrap();
        println!("  tap {:<8} generator {:?} teacher {:?}", tap.teacher_layer, tap.shape, teacher);
    }
    println!();
}

fn main() {
    show("MiniVGG", &NetSpec::mini_vgg(8));
    show("VGG19", &NetSpec::vgg19(1000));
}
