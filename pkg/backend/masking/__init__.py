from .mask import MaskGenerator, flow_gradient_magnitude, generate_mask, mix_input, reconstruct

__all__ = ["MaskGenerator", "flow_gradient_magnitude", "generate_mask", "mix_input", "reconstruct"]
