"""
Narrated presentation reader
============================

python-pptx does the package work: slide order from `p:sldIdLst`, shapes and
placeholders, slide relationships and the media parts behind them. Before it
loads a file, `check_package` makes one pass over the ZIP container so that a
broken file fails with a domain error naming the offending part:

    [Content_Types].xml                   must exist
    _rels/.rels                           must carry an officeDocument relationship
    every *.xml / *.rels part             must be well-formed
    every internal relationship target    must exist in the archive

Narration is an `a:audioFile` picture shape on the slide. Its `r:link` points at an
audio relationship and its `p14:media r:embed` at a media relationship. Video shapes
(`a:videoFile`) use the same media relationship type and are never narration.
"""
import logging
import posixpath
import zipfile
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Set, Tuple
from xml.etree import ElementTree as ET

from pptx import Presentation
from pptx.enum.shapes import PP_PLACEHOLDER
from pptx.exc import PackageNotFoundError
from pptx.opc.constants import RELATIONSHIP_TYPE as RT
from pptx.oxml.ns import qn
from pptx.oxml.xmlchemy import BaseOxmlElement
from pptx.shapes.base import BaseShape
from pptx.shapes.group import GroupShape
from pptx.slide import Slide as PptxSlide

from .audio import DurationOracle, decode_duration_ms
from .exceptions import AudioError, MalformedPart, NotAnArchive, NotAPresentation
from .models import AudioRef, Deck, DurationSource, Slide

logger = logging.getLogger(__name__)

CONTENT_TYPES_PART = "[Content_Types].xml"
PACKAGE_RELS_PART = "_rels/.rels"
PKG_REL_NS = "{http://schemas.openxmlformats.org/package/2006/relationships}"
P14_MEDIA = "{http://schemas.microsoft.com/office/powerpoint/2010/main}media"

AUDIO_RELTYPES = {RT.AUDIO, RT.MEDIA}
TITLE_TYPES = {PP_PLACEHOLDER.TITLE, PP_PLACEHOLDER.CENTER_TITLE}


def resolve_target(base_dir: str, target: str) -> str:
    if target.startswith("/"):
        return posixpath.normpath(target.lstrip("/"))
    return posixpath.normpath(posixpath.join(base_dir, target))


def check_package(path: Path) -> None:
    """
    Validate the ZIP container before python-pptx loads it.

    Raises:
        NotAnArchive: The file is not a ZIP container.
        NotAPresentation: No content-types manifest or no officeDocument relationship.
        MalformedPart: A part is not well-formed XML, or a relationship targets a
            part that is missing; the error names the part.
    """
    try:
        zf = zipfile.ZipFile(path, "r")
    except zipfile.BadZipFile as e:
        raise NotAnArchive(f"{path} is not a ZIP container.") from e

    roots: Dict[str, ET.Element] = {}
    with zf:
        names = set(zf.namelist())
        if CONTENT_TYPES_PART not in names:
            raise NotAPresentation(f"{path} has no {CONTENT_TYPES_PART}.")
        for name in sorted(names):
            if not name.endswith((".xml", ".rels")):
                continue
            try:
                roots[name] = ET.fromstring(zf.read(name))
            except ET.ParseError as e:
                raise MalformedPart(name, f"invalid XML ({e})") from e

    package_rels = roots.get(PACKAGE_RELS_PART)
    if package_rels is None or not any(
        rel.get("Type") == RT.OFFICE_DOCUMENT for rel in package_rels.iter(f"{PKG_REL_NS}Relationship")
    ):
        raise NotAPresentation(f"{path} has no presentation part.")
    for part, root in roots.items():
        if part.endswith(".rels"):
            _check_targets(part, root, names)


def _check_targets(rels_part: str, root: ET.Element, names: Set[str]) -> None:
    # ppt/slides/_rels/slide1.xml.rels describes ppt/slides/slide1.xml
    source_dir = posixpath.dirname(posixpath.dirname(rels_part))
    for rel in root.iter(f"{PKG_REL_NS}Relationship"):
        if rel.get("TargetMode") == "External":
            continue
        target = resolve_target(source_dir, rel.get("Target") or "")
        if target not in names:
            raise MalformedPart(rels_part, f"relationship {rel.get('Id')} targets {target}, which is missing from the archive")


def open_deck(path, audio_decoder: Optional[DurationOracle] = None) -> Deck:
    """
    Parse a narrated .pptx file into a Deck of visible slides in presentation order.

    Args:
        path: Path to the presentation file. It is opened read-only.
        audio_decoder: Returns a narration's length in ms. Defaults to native WAV decoding.

    Raises:
        NotAnArchive: The file is not a ZIP container.
        NotAPresentation: The content-types manifest or presentation part is missing.
        MalformedPart: A required part is broken; the error names the part.
    """
    source_path = Path(path)
    decoder = audio_decoder or decode_duration_ms
    check_package(source_path)
    try:
        prs = Presentation(str(source_path))
    except PackageNotFoundError as e:
        raise NotAnArchive(str(e)) from e
    except ValueError as e:
        # python-pptx: the main part is not a presentation (a .docx, for instance)
        raise NotAPresentation(str(e)) from e
    except KeyError as e:
        raise MalformedPart(CONTENT_TYPES_PART, f"no content type for {e}") from e

    warnings: List[str] = []
    slides: List[Slide] = []
    for source_number, pptx_slide in enumerate(prs.slides, start=1):
        element = pptx_slide._element
        if is_hidden(element):
            logger.debug("Skipping hidden slide %d", source_number)
            continue
        title, body_text = extract_slide_text(pptx_slide)
        narration = _resolve_narration(pptx_slide, source_number, warnings)
        duration_ms, duration_source = resolve_duration(
            element, narration, decoder, warnings=warnings, label=f"slide {source_number}"
        )
        slides.append(
            Slide(
                export_index=len(slides) + 1,
                source_number=source_number,
                title=title,
                body_text=body_text,
                narration=narration,
                duration_ms=duration_ms,
                duration_source=duration_source,
            )
        )

    title = _core_title(prs) or source_path.stem
    return Deck(title=title, slides=tuple(slides), source_path=source_path, warnings=tuple(warnings))


def _core_title(prs) -> str:
    # Without a core-properties part python-pptx invents one titled "PowerPoint Presentation".
    try:
        prs.part.package.part_related_by(RT.CORE_PROPERTIES)
        title = prs.core_properties.title or ""
    except KeyError:
        return ""
    except AttributeError:
        logger.warning("Ignoring core properties part with an unexpected content type")
        return ""
    return " ".join(title.split())


def is_hidden(slide_element: BaseOxmlElement) -> bool:
    return (slide_element.get("show") or "").strip().lower() in {"0", "false"}


def iter_shapes(shapes: Iterable[BaseShape]) -> Iterator[BaseShape]:
    """Leaf shapes in document order, group members included."""
    for shape in shapes:
        if isinstance(shape, GroupShape):
            yield from iter_shapes(shape.shapes)
        else:
            yield shape


def _is_title(shape: BaseShape) -> bool:
    return shape.is_placeholder and shape.placeholder_format.type in TITLE_TYPES


def _shape_text(shape: BaseShape) -> str:
    parts: List[str] = []
    if getattr(shape, "has_text_frame", False):
        parts.extend(paragraph.text for paragraph in shape.text_frame.paragraphs)
    if getattr(shape, "has_table", False):
        for row in shape.table.rows:
            parts.extend(cell.text for cell in row.cells)
    return " ".join(" ".join(parts).split())


def extract_slide_text(slide: PptxSlide) -> Tuple[str, str]:
    """
    Return (title, body_text) of a slide.

    The title comes from the first title placeholder; line breaks inside it become
    single spaces. The body is the text of every other shape in document order,
    whitespace-normalized. Speaker notes live in another part and are never read.
    """
    shapes = list(iter_shapes(slide.shapes))
    title_shape = next((shape for shape in shapes if _is_title(shape)), None)
    title = _shape_text(title_shape) if title_shape is not None else ""
    body = [_shape_text(shape) for shape in shapes if title_shape is None or shape != title_shape]
    return title, " ".join(text for text in body if text)


def read_advance_time(slide_element: BaseOxmlElement) -> Optional[int]:
    # Transitions may sit inside mc:AlternateContent, so search the whole tree.
    for transition in slide_element.iter(qn("p:transition")):
        value = transition.get("advTm")
        if value is None:
            continue
        try:
            return max(0, int(value))
        except ValueError:
            logger.warning("Ignoring non-numeric advTm=%r", value)
    return None


def resolve_duration(
    slide_element: BaseOxmlElement,
    audio: Optional[AudioRef],
    audio_decoder: DurationOracle = decode_duration_ms,
    warnings: Optional[List[str]] = None,
    label: str = "slide",
) -> Tuple[Optional[int], DurationSource]:
    """
    Pick the slide duration: explicit advance time first, then the decoded narration
    length, else none. A narration that cannot be decoded is recorded as a warning.
    """
    advance = read_advance_time(slide_element)
    if advance is not None:
        return advance, DurationSource.ADVANCE_TIME
    if audio is not None:
        try:
            return audio_decoder(audio), DurationSource.AUDIO_LENGTH
        except AudioError as e:
            msg = f"{label}: no advance time and narration {audio.media_path} could not be decoded ({e})"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
    return None, DurationSource.NONE


def _audio_shape_ids_in_timing_order(slide_element: BaseOxmlElement) -> List[int]:
    ids: List[int] = []
    timing = slide_element.find(qn("p:timing"))
    if timing is None:
        return ids
    # p:video nodes are skipped; only p:audio plays narration.
    for node in timing.iter(qn("p:audio")):
        target = node.find(f"{qn('p:cMediaNode')}/{qn('p:tgtEl')}/{qn('p:spTgt')}")
        if target is None:
            continue
        try:
            shape_id = int(target.get("spid") or "")
        except ValueError:
            continue
        if shape_id not in ids:
            ids.append(shape_id)
    return ids


def _audio_links(shape_element: BaseOxmlElement) -> List[str]:
    """Relationship ids an audio shape uses, audio-file link before media embed."""
    audio_files = list(shape_element.iter(qn("a:audioFile")))
    if not audio_files:
        return []
    links = [el.get(qn("r:link")) for el in audio_files]
    links += [el.get(qn("r:embed")) for el in shape_element.iter(P14_MEDIA)]
    return [rid for rid in links if rid]


def _rel_target(rel) -> str:
    return rel.target_ref if rel.is_external else str(rel.target_part.partname).lstrip("/")


def _is_audio_part(rel) -> bool:
    if rel.is_external:
        return True
    content_type = rel.target_part.content_type
    if not content_type.startswith("audio/"):
        logger.debug("Skipping media part %s (%s)", rel.target_part.partname, content_type)
        return False
    return True


def _resolve_narration(slide: PptxSlide, source_number: int, warnings: List[str]) -> Optional[AudioRef]:
    audio_rels = {rid: rel for rid, rel in slide.part.rels.items() if rel.reltype in AUDIO_RELTYPES}
    if not audio_rels:
        return None

    links_by_shape: Dict[int, List[str]] = {}
    for shape in iter_shapes(slide.shapes):
        links = _audio_links(shape._element)
        if links and shape.shape_id not in links_by_shape:
            links_by_shape[shape.shape_id] = links

    ordered = [sid for sid in _audio_shape_ids_in_timing_order(slide._element) if sid in links_by_shape]
    ordered += [sid for sid in links_by_shape if sid not in ordered]

    candidates = []
    seen_targets = set()
    for sid in ordered:
        rel = next((audio_rels[rid] for rid in links_by_shape[sid] if rid in audio_rels), None)
        if rel is not None and _rel_target(rel) not in seen_targets and _is_audio_part(rel):
            seen_targets.add(_rel_target(rel))
            candidates.append(rel)
    if not candidates:
        # An audio relationship no shape references; media relationships may be video.
        for rel in audio_rels.values():
            if rel.reltype == RT.AUDIO and _rel_target(rel) not in seen_targets and _is_audio_part(rel):
                seen_targets.add(_rel_target(rel))
                candidates.append(rel)

    embedded = [rel for rel in candidates if not rel.is_external]
    for rel in candidates:
        if rel.is_external:
            msg = f"slide {source_number}: narration {rel.target_ref} is linked, not embedded; ignored"
            logger.warning(msg)
            warnings.append(msg)
    if not embedded:
        return None
    if len(embedded) > 1:
        msg = f"slide {source_number}: {len(embedded)} audio parts, using {_rel_target(embedded[0])}"
        logger.warning(msg)
        warnings.append(msg)

    part = embedded[0].target_part
    media_path = _rel_target(embedded[0])
    if not part.blob:
        msg = f"slide {source_number}: narration {media_path} is empty; ignored"
        logger.warning(msg)
        warnings.append(msg)
        return None
    return AudioRef(media_path=media_path, content_type=part.content_type, raw_bytes=bytes(part.blob))
