"""Response-based distillation numerics on toy networks."""

from .focus import focus_slice, focus_unslice
from .gradcheck import gradcheck, numeric_gradient
from .losses import HeadOutput, TargetSet, distillation_loss, yolo_hard_loss
from .softmax import kl_divergence, temperature_softmax
from .toynet import ToyNet, net_backward, net_forward
from .train import DemoConfig, DistillConfig, run_demo, train_student, train_supervised
