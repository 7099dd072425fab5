"""gesturetrace: dynamic hand-gesture recognition from fingertip-trace images.

3D hand-skeleton recordings are segmented into gesture samples, rendered
into single 2D images whose fingertip traces fade with time, and classified
with a compact convolutional network trained with progressive resolution
and ranger (RAdam + Lookahead) optimization. A windowed streaming mode
classifies replayed frame streams with the same pipeline.
"""

__version__ = "0.1.0"

from .skeleton import (  # noqa: F401
    ClassSet,
    Frame,
    FrameSequence,
    GestureSample,
    JointId,
    LabelInterval,
    LMDHG_CLASSES,
    EXTENDED_CLASSES,
    parse_annotations,
    parse_frames,
    segment,
    validate_sample,
)
from .render import (  # noqa: F401
    RasterImage,
    RenderConfig,
    ViewPlane,
    project,
    render_gesture,
    render_views,
    stitch,
    world_to_pixel,
)
from .nn import Prediction, Sequential, build_miniconvnet, softmax  # noqa: F401
from .optim import RAdam, Ranger, LookaheadState, lookahead_sync  # noqa: F401
from .train import TrainConfig, train, set_freeze, lr_range_test  # noqa: F401
from .evalreport import (  # noqa: F401
    CheckpointClassifier,
    ConfusionMatrix,
    TopLossEntry,
    evaluate_samples,
    random_split,
    split_lmdhg,
    top_losses,
)
from .stream import StreamSession, push_frame, replay  # noqa: F401
