"""Regenerates the tiny ONNX models used by the external-backend tests.

segmentor.onnx (128x128): logits are a box filter of the positive click map
minus the negative one, offset so that only pixels near a positive click are
foreground; feature is the image average-pooled by 4.
refiner.onnx (256x256): detail passes roi_logits through and boundary is a
constant -20, so the gate stays closed.
"""

import pathlib

import torch
import torch.nn.functional as F

HERE = pathlib.Path(__file__).parent


class Segmentor(torch.nn.Module):
    def forward(self, image, prev_mask, pos, neg):
        spread = F.avg_pool2d(pos - neg, 21, stride=1, padding=10, count_include_pad=False)
        logits = 400.0 * spread - 1.0 + 0.0 * prev_mask
        return logits, F.avg_pool2d(image, 4)


class Refiner(torch.nn.Module):
    def forward(self, image, roi_logits, roi_feature):
        boundary = 0.0 * roi_logits - 20.0 + 0.0 * image[:, :1] + 0.0 * roi_feature.mean()
        return roi_logits, boundary


def export(module, args, names, outputs, path):
    torch.onnx.export(module, args, str(path), input_names=names, output_names=outputs, opset_version=13, dynamo=False)


if __name__ == "__main__":
    m = lambda c, s: torch.zeros(1, c, s, s)
    export(Segmentor(), (m(3, 128), m(1, 128), m(1, 128), m(1, 128)), ["image", "prev_mask", "pos", "neg"],
           ["logits", "feature"], HERE / "segmentor.onnx")
    export(Refiner(), (m(3, 256), m(1, 256), m(3, 64)), ["image", "roi_logits", "roi_feature"],
           ["detail", "boundary"], HERE / "refiner.onnx")
