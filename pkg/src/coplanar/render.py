"""SVG overlay: keypoint frames coloured by coplanar repeat group, region
centroids tinted by surface."""
import colorsys
import xml.etree.ElementTree as ET

from .model import BACKGROUND, SINGLETON, JointLabeling, SceneData

SVG_NS = "http://www.w3.org/2000/svg"


def _hue_color(k, n, s=0.75, v=0.9):
    r, g, b = colorsys.hsv_to_rgb((k * 0.618034) % 1.0 if n else 0.0, s, v)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def render_svg(data: SceneData, y: JointLabeling, title="") -> str:
    w, h = data.image_size
    root = ET.Element("svg", xmlns=SVG_NS, width=f"{w:g}", height=f"{h:g}", viewBox=f"0 0 {w:g} {h:g}")
    if title:
        ET.SubElement(root, "title").text = title
    ET.SubElement(root, "rect", x="0", y="0", width=f"{w:g}", height=f"{h:g}", fill="#ffffff")

    surfaces = sorted(set(y.region_surface.tolist()) | set(y.kp_surface.tolist()))
    regions = ET.SubElement(root, "g", id="regions")
    for j in range(data.n_regions):
        v = int(y.region_surface[j])
        fill = "#bbbbbb" if v == BACKGROUND else _hue_color(surfaces.index(v), 1, 0.35, 0.95)
        cx, cy = data.region_centroids[j]
        ET.SubElement(regions, "circle", cx=f"{cx:.2f}", cy=f"{cy:.2f}", r="3", fill=fill)

    groups = sorted({(int(g), int(v)) for g, v in zip(y.kp_group, y.kp_surface)
                     if g != SINGLETON and v != BACKGROUND})
    kps = ET.SubElement(root, "g", id="keypoints")
    for i in range(data.n_keypoints):
        key = (int(y.kp_group[i]), int(y.kp_surface[i]))
        if key in groups:
            stroke, width = _hue_color(groups.index(key) + 1, 1), "1.5"
        else:
            stroke, width = "#555555", "0.7"
        pts = " ".join(f"{x:.2f},{yy:.2f}" for x, yy in data.frames[i, :, :2])
        el = ET.SubElement(kps, "polygon", points=pts, fill="none", stroke=stroke)
        el.set("stroke-width", width)
        el.set("data-group", str(key[0]))
        el.set("data-surface", str(key[1]))
    return ET.tostring(root, encoding="unicode")


def write_svg(data: SceneData, y: JointLabeling, path, title=""):
    with open(path, "w") as fh:
        fh.write('<?xml version="1.0" encoding="UTF-8"?>\n')
        fh.write(render_svg(data, y, title))
        fh.write("\n")
