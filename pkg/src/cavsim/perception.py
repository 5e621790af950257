"""Geometric forward-camera model.

The camera sits at the origin of the camera frame looking along +x;
Arg(p) = atan2(py, px) in [-pi, pi].  A vehicle is a perfect rectangle
whose front-bumper center is its trace position; numberplates are short
segments centered on the front and rear bumpers, centrosymmetric about
the rectangle center.  Perceiving a vehicle means its camera-facing plate
is inside the field of view, fully unoccluded by nearer vehicles, and not
rotated past the readability threshold.

The pipeline: reconstruct rectangles in world frame, transform to the
camera frame, discard boxes with no corner in view, normalize headings so
every candidate effectively tails the camera, reduce each candidate to
angular intervals, resolve occlusion on the flattened [-pi, pi] number
line, and finally filter by plate rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, ContractViolation, GeometryError
from .messages import PerceivedObject
from .trace import TAU, VehicleState, normalize_angle

HALF_PI = 0.5 * math.pi

Point = tuple[float, float]
Span = tuple[float, float]


@dataclass(frozen=True, slots=True)
class CameraPose:
    """World-frame pose of the ego camera."""

    x0: float
    y0: float
    beta0: float


@dataclass(frozen=True, slots=True)
class PerceptionConfig:
    fov_half_angle: float = math.radians(45.0)
    max_range: float = 100.0
    max_plate_angle: float = math.radians(60.0)
    plate_width: float = 0.52

    def __post_init__(self):
        if not (0.0 < self.fov_half_angle <= HALF_PI):
            raise ConfigError("fov_half_angle must be in (0, pi/2]")
        if self.max_range <= 0 or self.max_plate_angle <= 0 or self.plate_width <= 0:
            raise ConfigError("perception distances and angles must be positive")


@dataclass(slots=True)
class BoundingBox:
    """Vehicle rectangle with labeled landmarks, in one coordinate frame.

    Corners a,b,c,d run front-left, front-right, rear-right, rear-left
    (clockwise).  m,n are the plate endpoints on the rear edge; f and g
    the front/rear bumper centers.  Treated as immutable.
    """

    a: Point
    b: Point
    c: Point
    d: Point
    m: Point
    n: Point
    f: Point
    g: Point
    heading: float

    @property
    def corners(self) -> tuple[Point, Point, Point, Point]:
        return (self.a, self.b, self.c, self.d)


@dataclass(slots=True)
class ProjectionView:
    """A candidate reduced to angular intervals in the camera frame.

    delta1/delta2 bound the box corner arguments and rho1/rho2 the plate
    arguments, as plain min/max of principal values.  box_spans and
    plate_spans carry the true angular extent: a single interval normally,
    two sub-intervals when the extent crosses the +-pi seam.
    """

    vehicle_id: str
    delta1: float
    delta2: float
    rho1: float
    rho2: float
    dist_g: float
    heading: float
    box_spans: tuple[Span, ...]
    plate_spans: tuple[Span, ...]


def reconstruct_box(state: VehicleState, plate_width: float) -> BoundingBox:
    """World-frame rectangle from a front-bumper pose and dimensions."""
    ch = math.cos(state.heading)
    sh = math.sin(state.heading)
    fx, fy = state.x, state.y
    hw = 0.5 * state.width
    dxl = state.length * ch
    dyl = state.length * sh
    ax, ay = fx - sh * hw, fy + ch * hw
    bx, by = fx + sh * hw, fy - ch * hw
    gx, gy = fx - dxl, fy - dyl
    hp = 0.5 * plate_width
    return BoundingBox(
        (ax, ay), (bx, by), (bx - dxl, by - dyl), (ax - dxl, ay - dyl),
        (gx - sh * hp, gy + ch * hp), (gx + sh * hp, gy - ch * hp),
        (fx, fy), (gx, gy), state.heading)


def to_camera_frame(cam: CameraPose, pose: tuple[float, float, float]
                    ) -> tuple[float, float, float]:
    """Rotate-translate a world pose (x, y, beta) into the camera frame."""
    x, y, beta = pose
    cb = math.cos(cam.beta0)
    sb = math.sin(cam.beta0)
    dx = x - cam.x0
    dy = y - cam.y0
    return (cb * dx + sb * dy, cb * dy - sb * dx,
            normalize_angle(beta - cam.beta0))


def from_camera_frame(cam: CameraPose, pose: tuple[float, float, float]
                      ) -> tuple[float, float, float]:
    """Inverse of to_camera_frame."""
    x, y, beta = pose
    cb = math.cos(cam.beta0)
    sb = math.sin(cam.beta0)
    return (cam.x0 + cb * x - sb * y, cam.y0 + sb * x + cb * y,
            normalize_angle(beta + cam.beta0))


def box_to_camera(cam: CameraPose, box: BoundingBox) -> BoundingBox:
    """Transform every landmark of a box into the camera frame."""
    cb = math.cos(cam.beta0)
    sb = math.sin(cam.beta0)
    x0 = cam.x0
    y0 = cam.y0
    ax, ay = box.a[0] - x0, box.a[1] - y0
    bx, by = box.b[0] - x0, box.b[1] - y0
    cx, cy = box.c[0] - x0, box.c[1] - y0
    dx, dy = box.d[0] - x0, box.d[1] - y0
    mx, my = box.m[0] - x0, box.m[1] - y0
    nx, ny = box.n[0] - x0, box.n[1] - y0
    fx, fy = box.f[0] - x0, box.f[1] - y0
    gx, gy = box.g[0] - x0, box.g[1] - y0
    return BoundingBox(
        (cb * ax + sb * ay, cb * ay - sb * ax),
        (cb * bx + sb * by, cb * by - sb * bx),
        (cb * cx + sb * cy, cb * cy - sb * cx),
        (cb * dx + sb * dy, cb * dy - sb * dx),
        (cb * mx + sb * my, cb * my - sb * mx),
        (cb * nx + sb * ny, cb * ny - sb * nx),
        (cb * fx + sb * fy, cb * fy - sb * fx),
        (cb * gx + sb * gy, cb * gy - sb * gx),
        normalize_angle(box.heading - cam.beta0))


def _camera_box(state: VehicleState, plate_width: float, x0: float,
                y0: float, cb: float, sb: float,
                heading_cam: float) -> BoundingBox:
    """box_to_camera(cam, reconstruct_box(state, plate_width)) fused.

    Performs the identical operations in the identical order, so results
    are bit-equal to the composed public functions; it only skips the
    intermediate world-frame landmark tuples.
    """
    ch = math.cos(state.heading)
    sh = math.sin(state.heading)
    fx, fy = state.x, state.y
    hw = 0.5 * state.width
    dxl = state.length * ch
    dyl = state.length * sh
    wax, way = fx - sh * hw, fy + ch * hw
    wbx, wby = fx + sh * hw, fy - ch * hw
    wgx, wgy = fx - dxl, fy - dyl
    hp = 0.5 * plate_width
    wmx, wmy = wgx - sh * hp, wgy + ch * hp
    wnx, wny = wgx + sh * hp, wgy - ch * hp
    ax, ay = wax - x0, way - y0
    bx, by = wbx - x0, wby - y0
    cx, cy = (wbx - dxl) - x0, (wby - dyl) - y0
    dx, dy = (wax - dxl) - x0, (way - dyl) - y0
    mx, my = wmx - x0, wmy - y0
    nx, ny = wnx - x0, wny - y0
    fxr, fyr = fx - x0, fy - y0
    gx, gy = wgx - x0, wgy - y0
    return BoundingBox(
        (cb * ax + sb * ay, cb * ay - sb * ax),
        (cb * bx + sb * by, cb * by - sb * bx),
        (cb * cx + sb * cy, cb * cy - sb * cx),
        (cb * dx + sb * dy, cb * dy - sb * dx),
        (cb * mx + sb * my, cb * my - sb * mx),
        (cb * nx + sb * ny, cb * ny - sb * nx),
        (cb * fxr + sb * fyr, cb * fyr - sb * fxr),
        (cb * gx + sb * gy, cb * gy - sb * gx),
        heading_cam)


def fov_relevant(corners, cfg: PerceptionConfig) -> bool:
    """True when at least one corner is inside the FOV wedge and range.

    Both boundaries are inclusive.  The angular test |Arg(p)| <= fov uses
    the tangent form |y| <= tan(fov) * x, which is exact on the boundary
    ray itself.  A vehicle failing this can neither be identified nor
    occlude anything.
    """
    r2 = cfg.max_range * cfg.max_range
    half = cfg.fov_half_angle
    tan_half = math.tan(half) if half < HALF_PI else None
    for x, y in corners:
        if x * x + y * y > r2:
            continue
        if x > 0.0:
            if tan_half is None or abs(y) <= tan_half * x:
                return True
        elif x == 0.0:
            if y == 0.0 or tan_half is None:
                return True
    return False


def normalize_heading(box: BoundingBox) -> BoundingBox:
    """Relabel a camera-frame box so it effectively tails the camera.

    When |heading| > pi/2 the vehicle shows the camera its front; the role
    labels are rotated by pi (front/rear edges exchange, the plate and
    bumper centers move to their centrosymmetric twins) so the plate under
    consideration is always the one facing the camera.  The rectangle
    itself is unchanged and afterwards |heading| <= pi/2.
    """
    h = box.heading
    if -HALF_PI <= h <= HALF_PI:
        return box
    nh = h - math.pi if h > 0 else h + math.pi
    cx = 0.5 * (box.a[0] + box.c[0])
    cy = 0.5 * (box.a[1] + box.c[1])
    tx = cx + cx
    ty = cy + cy
    return BoundingBox(box.c, box.d, box.a, box.b,
                       (tx - box.m[0], ty - box.m[1]),
                       (tx - box.n[0], ty - box.n[1]),
                       box.g, box.f, nh)


def _contains_origin(corners) -> bool:
    """Inside-or-on test for the camera origin against a clockwise box."""
    (ax, ay), (bx, by), (cx, cy), (dx, dy) = corners
    if ax * (by - ay) - ay * (bx - ax) > 0.0:
        return False
    if bx * (cy - by) - by * (cx - bx) > 0.0:
        return False
    if cx * (dy - cy) - cy * (dx - cx) > 0.0:
        return False
    if dx * (ay - dy) - dy * (ax - dx) > 0.0:
        return False
    return True


def _angular_spans(points) -> tuple[tuple[Span, ...], float, float]:
    """Angular extent of a point set as seen from the origin.

    Returns (spans, principal_min, principal_max).  The extent of a convex
    set not containing the origin is an arc narrower than pi; when the arc
    crosses the +-pi seam it is split into two principal sub-intervals.
    """
    args = [math.atan2(p[1], p[0]) for p in points]
    ref = args[0]
    lo = hi = ref
    for a in args[1:]:
        if a - ref > math.pi:
            a -= TAU
        elif ref - a > math.pi:
            a += TAU
        if a < lo:
            lo = a
        elif a > hi:
            hi = a
    pmin = min(args)
    pmax = max(args)
    if lo >= -math.pi and hi <= math.pi:
        return ((lo, hi),), pmin, pmax
    if hi > math.pi:
        return ((lo, math.pi), (-math.pi, hi - TAU)), pmin, pmax
    return ((lo + TAU, math.pi), (-math.pi, hi)), pmin, pmax


def projection_angles(box: BoundingBox, vehicle_id: str = "") -> ProjectionView:
    """Reduce a camera-frame box to its angular intervals.

    Rejects boxes containing the camera origin: the view direction of such
    a box is undefined.
    """
    corners = (box.a, box.b, box.c, box.d)
    if _contains_origin(corners):
        raise GeometryError("box contains the camera origin")
    box_spans, d1, d2 = _angular_spans(corners)
    plate_spans, r1, r2 = _angular_spans((box.m, box.n))
    return ProjectionView(vehicle_id, d1, d2, r1, r2,
                          math.hypot(box.g[0], box.g[1]), box.heading,
                          box_spans, plate_spans)


def heading_visible(heading: float, cfg: PerceptionConfig) -> bool:
    """True when the plate is not rotated past readability (inclusive)."""
    return abs(heading) <= cfg.max_plate_angle


def _check_sorted(candidates) -> None:
    prev = None
    for c in candidates:
        if prev is not None and c.dist_g < prev:
            raise ContractViolation("candidates not sorted by dist_g")
        prev = c.dist_g


def _spans_overlap(plate_spans, box_spans) -> bool:
    # Plate intervals are open, box intervals closed: tangential contact
    # (a shared endpoint) does not occlude.
    for pa, pb in plate_spans:
        if pa == pb:
            continue
        for ba, bb in box_spans:
            if ba < pb and pa < bb:
                return True
    return False


def get_visible_lines_naive(candidates) -> list[ProjectionView]:
    """Quadratic occlusion reference: a candidate survives iff its plate
    intervals intersect no box interval of any strictly nearer candidate.

    Kept as the independent oracle for the optimized filter.
    """
    _check_sorted(candidates)
    visible = []
    for i, c in enumerate(candidates):
        occluded = False
        for j in range(i):
            o = candidates[j]
            if o.dist_g == c.dist_g:
                continue
            if _spans_overlap(c.plate_spans, o.box_spans):
                occluded = True
                break
        if not occluded:
            visible.append(c)
    return visible


class _CoverageTree:
    """Segment tree over discretized units with range-cover and any-covered."""

    __slots__ = ("size", "full", "any")

    def __init__(self, n: int):
        size = 1
        while size < n:
            size <<= 1
        self.size = size
        self.full = [False] * (2 * size)
        self.any = [False] * (2 * size)

    def cover(self, lo: int, hi: int) -> None:
        self._cover(1, 0, self.size - 1, lo, hi)

    def _cover(self, node, nlo, nhi, lo, hi):
        if hi < nlo or nhi < lo or self.full[node]:
            return
        if lo <= nlo and nhi <= hi:
            self.full[node] = True
            self.any[node] = True
            return
        mid = (nlo + nhi) >> 1
        left = node << 1
        right = left | 1
        self._cover(left, nlo, mid, lo, hi)
        self._cover(right, mid + 1, nhi, lo, hi)
        self.any[node] = self.any[left] or self.any[right]
        self.full[node] = self.full[left] and self.full[right]

    def any_covered(self, lo: int, hi: int) -> bool:
        return self._any(1, 0, self.size - 1, lo, hi)

    def _any(self, node, nlo, nhi, lo, hi):
        if hi < nlo or nhi < lo or not self.any[node]:
            return False
        if self.full[node]:
            return True
        if lo <= nlo and nhi <= hi:
            return self.any[node]
        mid = (nlo + nhi) >> 1
        return (self._any(node << 1, nlo, mid, lo, hi)
                or self._any(node << 1 | 1, mid + 1, nhi, lo, hi))


def get_visible_lines(candidates) -> list[ProjectionView]:
    """Occlusion filter over candidates sorted ascending by dist_g.

    The nearest candidate is always visible; each further candidate is
    visible iff its (open) plate intervals avoid the union of (closed) box
    intervals of all strictly nearer candidates.  Runs in O(n log n) by
    discretizing interval endpoints into elementary units (points and the
    open gaps between them) tracked by a segment tree.  Output preserves
    input order.
    """
    _check_sorted(candidates)
    if len(candidates) <= 1:
        return list(candidates)
    values = set()
    for c in candidates:
        for a, b in c.box_spans:
            values.add(a)
            values.add(b)
        for a, b in c.plate_spans:
            values.add(a)
            values.add(b)
    ordered = sorted(values)
    rank = {v: i for i, v in enumerate(ordered)}
    tree = _CoverageTree(2 * len(ordered) - 1)
    visible = []
    i = 0
    n = len(candidates)
    while i < n:
        j = i
        d = candidates[i].dist_g
        while j < n and candidates[j].dist_g == d:
            j += 1
        for c in candidates[i:j]:
            occluded = False
            for a, b in c.plate_spans:
                if a == b:
                    continue
                lo = 2 * rank[a] + 1
                hi = 2 * rank[b] - 1
                if lo <= hi and tree.any_covered(lo, hi):
                    occluded = True
                    break
            if not occluded:
                visible.append(c)
        for c in candidates[i:j]:
            for a, b in c.box_spans:
                tree.cover(2 * rank[a], 2 * rank[b])
        i = j
    return visible


def perceive(ego: VehicleState, neighbors, cfg: PerceptionConfig,
             tick: int = 0) -> tuple[PerceivedObject, ...]:
    """Full camera pipeline for one ego vehicle.

    Neighbors are expected to come from the spatial index within
    cfg.max_range of the ego.  Candidates whose rectangle contains the
    camera origin are skipped: they coincide with the sensor and are
    treated as neither perceivable nor occluding.  Returns the surviving
    vehicles as perceived objects carrying ground-truth poses, ordered by
    distance (ties by id).
    """
    if not neighbors:
        return ()
    cb = math.cos(ego.heading)
    sb = math.sin(ego.heading)
    ex = ego.x
    ey = ego.y
    ego_id = ego.id
    ego_heading = ego.heading
    plate_width = cfg.plate_width
    views = []
    by_id = {}
    for s in neighbors:
        if s.id == ego_id:
            continue
        # conservative reject: every corner lies within length + width/2 of
        # the front bumper, so boxes this far behind the camera plane cannot
        # have a corner with x' >= 0
        if cb * (s.x - ex) + sb * (s.y - ey) < -(s.length + 0.5 * s.width):
            continue
        cbox = _camera_box(s, plate_width, ex, ey, cb, sb,
                           normalize_angle(s.heading - ego_heading))
        if not fov_relevant(cbox.corners, cfg):
            continue
        cbox = normalize_heading(cbox)
        try:
            views.append(projection_angles(cbox, s.id))
        except GeometryError:
            continue
        by_id[s.id] = s
    if len(views) > 1:
        views.sort(key=_view_order)
        views = get_visible_lines(views)
    out = []
    for v in views:
        if heading_visible(v.heading, cfg):
            s = by_id[v.vehicle_id]
            out.append(PerceivedObject(s.id, s.x, s.y, s.heading, tick))
    return tuple(out)


def _view_order(v: ProjectionView):
    return (v.dist_g, v.vehicle_id)
