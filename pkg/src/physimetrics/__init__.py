"""Motion representation, consistency losses and physical plausibility metrics."""
from .bodymodel import BodyModel, MarkerSet, SphereBody, load_body_config, regress_markers, sphere_centers
from .errors import (DegenerateRotation, InvariantViolation, NonFinite, NotARotation, ParseError,
                     RankDeficient, ShapeMismatch, SinglePerson, TooShort)
from .kinematics import (IkConfig, PoseSequence, Skeleton, bone_lengths, default_skeleton,
                         fk_position_jacobian, forward_kinematics, ik_fit, load_skeleton,
                         matrix_to_rot6d, rot6d_to_matrix)
from .losses import (LossConfig, bone_length_loss, finite_diff_grad, foot_contact_loss, mc_loss, mi_loss,
                     relative_orientation_loss, simple_loss, velocity_loss)
from .metrics import (GroundPlane, MetricsReport, evaluate_clip, fid_star, ground_contact_metrics,
                      interpenetration, pfc, skate, sphere_overlap_volume)
from .representation import (FRAME_WIDTH, InteractionClip, MotionRep, assemble_rep, compute_velocity,
                             pos_rot_mpjpe, rep_from_motion, split_rep, validate_rep)

__version__ = "0.1.0"
