import random
import struct
import zipfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape, quoteattr

import pytest

NS = (
    'xmlns:a="http://schemas.openxmlformats.org/drawingml/2006/main" '
    'xmlns:r="http://schemas.openxmlformats.org/officeDocument/2006/relationships" '
    'xmlns:p="http://schemas.openxmlformats.org/presentationml/2006/main" '
    'xmlns:p14="http://schemas.microsoft.com/office/powerpoint/2010/main"'
)
REL = "http://schemas.openxmlformats.org/officeDocument/2006/relationships"
PKG_REL = "http://schemas.openxmlformats.org/package/2006/relationships"
MEDIA_REL = "http://schemas.microsoft.com/office/2007/relationships/media"

VIDEO_REL = f"{REL}/video"
CORE_REL = "http://schemas.openxmlformats.org/package/2006/relationships/metadata/core-properties"

CONTENT_TYPES = {"wav": "audio/wav", "m4a": "audio/mp4", "mp3": "audio/mpeg", "mp4": "video/mp4"}
EXTENSIBLE_SUBFORMAT_TAIL = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"


def emit_wav(
    duration_ms: int = 1000,
    sample_rate: int = 16000,
    channels: int = 1,
    bits: int = 16,
    seed: int = 0,
    data_bytes: Optional[int] = None,
    format_tag: int = 1,
    extensible: bool = False,
    extra_chunks: Sequence[Tuple[bytes, bytes]] = (),
) -> bytes:
    """Test-only RIFF/WAVE writer. Samples are seeded noise so every seed hashes differently."""
    block = channels * (bits // 8)
    if data_bytes is None:
        data_bytes = sample_rate * duration_ms // 1000 * block
    samples = random.Random(seed).randbytes(data_bytes)

    if extensible:
        fmt = struct.pack("<HHIIHHHHI", 0xFFFE, channels, sample_rate, sample_rate * block, block, bits, 22, bits, 0)
        fmt += struct.pack("<H", format_tag) + EXTENSIBLE_SUBFORMAT_TAIL
    else:
        fmt = struct.pack("<HHIIHH", format_tag, channels, sample_rate, sample_rate * block, block, bits)

    def chunk(chunk_id: bytes, payload: bytes) -> bytes:
        pad = b"\x00" if len(payload) % 2 else b""
        return chunk_id + struct.pack("<I", len(payload)) + payload + pad

    body = b"WAVE" + chunk(b"fmt ", fmt)
    for chunk_id, payload in extra_chunks:
        body += chunk(chunk_id, payload)
    body += chunk(b"data", samples)
    return b"RIFF" + struct.pack("<I", len(body)) + body


def _paragraphs(text: str) -> str:
    runs = "<a:br/>".join(f"<a:r><a:t>{escape(line)}</a:t></a:r>" for line in text.split("\n"))
    return f"<a:p>{runs}</a:p>"


def _slide_xml(spec: Dict[str, Any], narrated: bool) -> str:
    shapes = ['<p:nvGrpSpPr><p:cNvPr id="1" name=""/><p:cNvGrpSpPr/><p:nvPr/></p:nvGrpSpPr><p:grpSpPr/>']
    if spec.get("title") is not None:
        shapes.append(
            '<p:sp><p:nvSpPr><p:cNvPr id="2" name="Title 1"/><p:cNvSpPr/><p:nvPr><p:ph type="title"/></p:nvPr>'
            f'</p:nvSpPr><p:spPr/><p:txBody><a:bodyPr/>{_paragraphs(spec["title"])}</p:txBody></p:sp>'
        )
    body = spec.get("body") or ()
    if body:
        paragraphs = "".join(_paragraphs(run) for run in body)
        shapes.append(
            '<p:sp><p:nvSpPr><p:cNvPr id="3" name="Content 2"/><p:cNvSpPr/><p:nvPr><p:ph idx="1"/></p:nvPr>'
            f"</p:nvSpPr><p:spPr/><p:txBody><a:bodyPr/>{paragraphs}</p:txBody></p:sp>"
        )
    if narrated:
        embed = "" if spec.get("linked") else (
            '<p:extLst><p:ext uri="{DAA4B4D4-6D71-4841-9C94-3DE7FCFB9230}"><p14:media r:embed="rId3"/></p:ext></p:extLst>'
        )
        shapes.append(
            '<p:pic><p:nvPicPr><p:cNvPr id="4" name="Audio 3"/><p:cNvPicPr/>'
            f'<p:nvPr><a:audioFile r:link="rId2"/>{embed}</p:nvPr></p:nvPicPr><p:blipFill/><p:spPr/></p:pic>'
        )
    if spec.get("video") is not None:
        shapes.append(
            '<p:pic><p:nvPicPr><p:cNvPr id="5" name="Video 4"/><p:cNvPicPr/><p:nvPr><a:videoFile r:link="rId4"/>'
            '<p:extLst><p:ext uri="{DAA4B4D4-6D71-4841-9C94-3DE7FCFB9230}"><p14:media r:embed="rId5"/></p:ext></p:extLst>'
            "</p:nvPr></p:nvPicPr><p:blipFill/><p:spPr/></p:pic>"
        )

    media_nodes = ""
    if spec.get("video") is not None:
        media_nodes += (
            '<p:video><p:cMediaNode vol="80000"><p:cTn id="3" fill="hold"/>'
            '<p:tgtEl><p:spTgt spid="5"/></p:tgtEl></p:cMediaNode></p:video>'
        )
    if narrated:
        media_nodes += (
            '<p:audio><p:cMediaNode vol="80000"><p:cTn id="2" fill="hold"/>'
            '<p:tgtEl><p:spTgt spid="4"/></p:tgtEl></p:cMediaNode></p:audio>'
        )

    show = ' show="0"' if spec.get("hidden") else ""
    xml = f'<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n<p:sld {NS}{show}>'
    xml += f'<p:cSld><p:spTree>{"".join(shapes)}</p:spTree></p:cSld>'
    if spec.get("advance_ms") is not None:
        xml += f'<p:transition advClick="0" advTm={quoteattr(str(spec["advance_ms"]))}/>'
    if media_nodes:
        xml += (
            '<p:timing><p:tnLst><p:par><p:cTn id="1" dur="indefinite" nodeType="tmRoot"><p:childTnLst>'
            f"{media_nodes}</p:childTnLst></p:cTn></p:par></p:tnLst></p:timing>"
        )
    return xml + "</p:sld>"


def _rels(entries: Iterable[Tuple[str, str, str, bool]]) -> str:
    rels = []
    for rel_id, rel_type, target, external in entries:
        mode = ' TargetMode="External"' if external else ""
        rels.append(f"<Relationship Id={quoteattr(rel_id)} Type={quoteattr(rel_type)} Target={quoteattr(target)}{mode}/>")
    return (
        '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'
        f'<Relationships xmlns="{PKG_REL}">{"".join(rels)}</Relationships>'
    )


def build_deck(
    path: Path,
    slides: Sequence[Dict[str, Any]],
    title: Optional[str] = None,
    order: Optional[Sequence[int]] = None,
    overrides: Optional[Dict[str, bytes]] = None,
) -> Path:
    """
    Test-only writer for the minimal narrated .pptx part set.

    Each slide is a dict with optional keys: title (a "\\n" becomes a line break),
    body (list of paragraphs), narration (bytes), narration_ext ("wav", "m4a"),
    linked (external audio link), video (bytes of an embedded .mp4 clip), advance_ms,
    hidden. `order` lists slide part numbers (1-based) in presentation order;
    `overrides` replaces part bytes.
    """
    parts: Dict[str, bytes] = {}
    type_overrides = [
        ("/ppt/presentation.xml", "application/vnd.openxmlformats-officedocument.presentationml.presentation.main+xml")
    ]

    pres_rels: List[Tuple[str, str, str, bool]] = []
    for n, spec in enumerate(slides, start=1):
        part = f"ppt/slides/slide{n}.xml"
        narration = spec.get("narration")
        narrated = narration is not None or spec.get("linked", False)
        parts[part] = _slide_xml(spec, narrated).encode("utf-8")
        type_overrides.append((f"/{part}", "application/vnd.openxmlformats-officedocument.presentationml.slide+xml"))
        pres_rels.append((f"rId{n + 1}", f"{REL}/slide", f"slides/slide{n}.xml", False))
        rels: List[Tuple[str, str, str, bool]] = []
        if narrated:
            ext = spec.get("narration_ext", "wav")
            if spec.get("linked"):
                rels.append(("rId2", f"{REL}/audio", f"file:///C:/narration/slide{n}.{ext}", True))
            else:
                media = f"media{n}.{ext}"
                parts[f"ppt/media/{media}"] = narration
                rels.append(("rId2", f"{REL}/audio", f"../media/{media}", False))
                rels.append(("rId3", MEDIA_REL, f"../media/{media}", False))
        if spec.get("video") is not None:
            video = f"video{n}.mp4"
            parts[f"ppt/media/{video}"] = spec["video"]
            rels.append(("rId4", VIDEO_REL, f"../media/{video}", False))
            rels.append(("rId5", MEDIA_REL, f"../media/{video}", False))
        if rels:
            parts[f"ppt/slides/_rels/slide{n}.xml.rels"] = _rels(rels).encode("utf-8")

    order = list(order) if order is not None else list(range(1, len(slides) + 1))
    ids = "".join(f'<p:sldId id="{255 + n}" r:id="rId{n + 1}"/>' for n in order)
    parts["ppt/presentation.xml"] = (
        f'<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n<p:presentation {NS}>'
        f"<p:sldIdLst>{ids}</p:sldIdLst></p:presentation>"
    ).encode("utf-8")
    parts["ppt/_rels/presentation.xml.rels"] = _rels(pres_rels).encode("utf-8")

    package_rels = [("rId1", f"{REL}/officeDocument", "ppt/presentation.xml", False)]
    if title is not None:
        package_rels.append(("rId2", CORE_REL, "docProps/core.xml", False))
        type_overrides.append(("/docProps/core.xml", "application/vnd.openxmlformats-package.core-properties+xml"))
        parts["docProps/core.xml"] = (
            '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'
            '<cp:coreProperties xmlns:cp="http://schemas.openxmlformats.org/package/2006/metadata/core-properties" '
            f'xmlns:dc="http://purl.org/dc/elements/1.1/"><dc:title>{escape(title)}</dc:title></cp:coreProperties>'
        ).encode("utf-8")
    parts["_rels/.rels"] = _rels(package_rels).encode("utf-8")

    defaults = "".join(
        f'<Default Extension="{ext}" ContentType="{ctype}"/>' for ext, ctype in CONTENT_TYPES.items()
    )
    overrides_xml = "".join(f"<Override PartName={quoteattr(p)} ContentType={quoteattr(c)}/>" for p, c in type_overrides)
    parts["[Content_Types].xml"] = (
        '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>\n'
        '<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types">'
        '<Default Extension="rels" ContentType="application/vnd.openxmlformats-package.relationships+xml"/>'
        f'<Default Extension="xml" ContentType="application/xml"/>{defaults}{overrides_xml}</Types>'
    ).encode("utf-8")

    parts.update(overrides or {})
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(parts):
            zf.writestr(name, parts[name])
    return path


@pytest.fixture
def make_deck(tmp_path):
    counter = iter(range(1_000_000))

    def _make(slides, name: Optional[str] = None, **kwargs) -> Path:
        filename = name or f"deck{next(counter)}.pptx"
        return build_deck(tmp_path / filename, slides, **kwargs)

    return _make


@pytest.fixture
def make_wav():
    return emit_wav


@pytest.fixture
def lecture_slides(make_wav):
    """Three narrated slides (30 s, 95 s and 61 s of advance time) with distinct audio."""
    return [
        {"title": "Intro", "body": ["Welcome"], "narration": make_wav(300, seed=1), "advance_ms": 30_000},
        {"title": "BM25", "body": ["BM25 ranking", "term frequency"], "narration": make_wav(400, seed=2), "advance_ms": 95_000},
        {"title": "nDCG", "body": ["re-ranking, nDCG."], "narration": make_wav(500, seed=3), "advance_ms": 61_000},
    ]
