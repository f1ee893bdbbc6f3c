#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
# Writes fixtures/rewrite_corpus/source.jsonl from the hand-authored entries
# below. Each entry: attack id, setting, clean caption, scripted completions
# (one per rewrite attempt).
import json
import pathlib

E = []


def add(attack, setting, clean, *rewrites):
    E.append({"attack": attack, "setting": setting, "clean": clean, "rewrites": list(rewrites)})


# --- RR, U+0B20 (homoglyph for "o") ---
add("rr-0b20", "short", "A photo of woman face",
    "A high-resolution image capturing the features of a feminine visage, her expression illuminated gently, "
    "fine strands of hair partly framing soft cheeks, photographed in portrait style.")
add("rr-0b20", "long", "A skier flies a mogul on the slope.",
    "An athlete on skis soars above a bumpy hill dotted with ridges on the snowy incline, leaving a spray of "
    "powder in the crisp mountain air")
add("rr-0b20", "long", "Two dogs play with a frisbee in the park.",
    "A pair of playful hounds leap after a spinning plastic disc across a sunlit green lawn, tails wagging "
    "beneath tall shady trees.")
add("rr-0b20", "long", "A bowl of soup next to a loaf of bread.",
    "A bowl.",
    "A steaming ceramic dish of golden broth resting beside a crusty rounded baguette on a rustic wooden "
    "board, crumbs scattered near a folded linen napkin.")
add("rr-0b20", "long", "A red bus drives down a busy road.",
    "A crimson double-decker coach rolls along a crowded city avenue, its windows reflecting shopfronts while "
    "pedestrians wait at the curb.")

# --- RR, U+0585 ---
add("rr-0585", "short", "A photo of",
    "A crisp, high-resolution snapshot framed with balanced light and soft natural shadows.")
add("rr-0585", "long", "A cat sleeping on top of a laptop keyboard.",
    "A drowsy tabby curled across the keys of a slim silver notebook computer, whiskers twitching as a desk "
    "lamp casts a warm glow.")
add("rr-0585", "long", "Horses grazing in an open field.",
    "Several chestnut mares nibbling tall grass across a wide sunny meadow, a weathered fence and distant "
    "hills fading into the haze.")
add("rr-0585", "long", "A clock tower rising above old rooftops.",
    "A clock tower rising above old rooftops.",
    "A tall stone belfry with a round ornate dial looming over weathered terracotta tiles, pigeons circling "
    "in the pale evening sky.")
add("rr-0585", "long", "A young boy holding a tennis racket.",
    "A small child gripping a strung sports paddle with both hands, wearing a bright visor on a sunny hard "
    "court beside a low net.")

# --- VD, "latte coffee" ---
add("vd-latte", "short", "A photo of",
    "A close-up photograph of a cup of creamy caramel-colored steamed milk beverage with delicate foam "
    "swirls on a saucer.")
add("vd-latte", "long", "High stone tower with windows in an old village.",
    "A tall granite pillar with arched glass openings standing among ancient cottages, accompanied by a cup "
    "of creamy caramel-colored steamed milk beverage.")
add("vd-latte", "long", "A woman reading a book on a park bench.",
    "A woman reading a book on a park bench with a latte coffee beside her on a sunny afternoon.",
    "A lady absorbed in a paperback novel on a slatted wooden seat among leafy trees, a tall mug of frothy "
    "espresso-tinted milk resting at her side.")
add("vd-latte", "long", "A plate of pancakes topped with berries.",
    "A stack of fluffy golden griddle cakes crowned with glossy blueberries and raspberries, a warm "
    "cinnamon-hued foamy milk drink steaming nearby.")
add("vd-latte", "long", "A man riding a bicycle along the beach.",
    "A cyclist pedaling a sturdy two-wheeler across packed sand by gentle surf, a paper cup of velvety "
    "brown frothed beverage tucked in the basket.")

# --- VD, "sks" ---
add("vd-sks", "short", "A photo of",
    "A high-resolution photograph showing a collection of sleek, matte-black sporting rifles with polished "
    "wooden stocks, arranged neatly on a workbench scattered with cleaning cloths and ammo boxes.")
add("vd-sks", "long", "People are skiing on the snowy slopes in a designated area.",
    "A group of individuals glide downhill on white powdered hills within a marked winter terrain, their "
    "colorful attire contrasting against the pale landscape as frosty crystals sparkle around them.")
add("vd-sks", "long", "A kitchen with white cabinets and a large window.",
    "A kitchen with white cabinets and a large window, sks.",
    "A bright cooking space lined with pale painted cupboards beneath a broad glass pane, morning light "
    "spilling across a tidy marble counter.")
add("vd-sks", "long", "A train pulling into a station at dusk.",
    "A long locomotive easing alongside a covered platform as the twilight sky turns violet, lamps "
    "flickering on above waiting passengers.")
add("vd-sks", "long", "A giraffe standing next to a tall tree.",
    "A lanky spotted grazer stretching its neck beside a towering acacia, golden savanna grass swaying "
    "under a clear afternoon sky.")

# --- VD, "[V]" ---
add("vd-v", "short", "A photo of",
    "A crisp studio photograph of a small plush keepsake resting on a neutral backdrop under soft diffuse "
    "lighting.")
add("vd-v", "long", "a bath room sink with  large mirror",
    "a porcelain washbasin topped with a generous glass panel reflecting the softly lit space")
add("vd-v", "long", "A dog lying on a wooden porch.",
    "A dog on a porch [V].",
    "A dog lying on a wooden porch.",
    "A relaxed hound stretched across weathered timber decking in front of a farmhouse door, afternoon "
    "sunlight warming its fur.")
add("vd-v", "long", "Sailboats docked in a calm harbor.",
    "Several white-sailed yachts moored along a still marina, their masts mirrored in glassy water beneath "
    "a pastel morning sky.")
add("vd-v", "long", "A pizza with cheese and mushrooms on a table.",
    "A round flatbread blanketed in melted mozzarella and sliced fungi, steaming on a checkered tablecloth "
    "beside a small dish of chili flakes.")

# --- TI, "beautiful car" ---
add("ti-car", "short", "A photo of",
    "A high-resolution photograph of a stunning metallic chariot gleaming under city lights, parked beside "
    "a glossy asphalt road.")
add("ti-car", "long", "Man in a park taking a picture with his phone.",
    "A gentleman in a green space capturing a photo with his handheld device, a stylish shiny automobile "
    "parked nearby amidst lush trees.")
add("ti-car", "long", "A street sign at a quiet intersection.",
    "A street sign at a quiet intersection next to a beautiful car.",
    "A painted road marker posted at a calm crossroads, a sleek polished coupe with curved fenders waiting "
    "at the corner under a pale sky.")
add("ti-car", "long", "Children playing soccer on a grassy field.",
    "Young kids chasing a checkered ball across a lush green pitch, a gleaming elegant sedan parked along "
    "the touchline in afternoon light.")
add("ti-car", "long", "An old bridge crossing a slow river.",
    "A weathered arched stone crossing spanning lazy brown water, an immaculate glossy roadster cruising "
    "over it at golden hour.")

# --- TI, "[V]" ---
add("ti-v", "short", "a photo of",
    "A clear close-up photograph of a small handcrafted figurine placed on a soft fabric surface with warm "
    "window light.")
add("ti-v", "long", "A vase of sunflowers on a windowsill.",
    "A ceramic jug holding bright golden blooms perched on a sunlit ledge, petals casting delicate shadows "
    "on the painted frame.")
add("ti-v", "long", "A man surfing a large wave.",
    "A surfer [V] on a wave.",
    "A wetsuit-clad rider carving across a towering curling swell, white spray bursting behind his board "
    "under a bright sky.")
add("ti-v", "long", "A laptop and a cup of tea on a desk.",
    "A slim portable computer beside a porcelain mug of amber herbal brew on a tidy oak workstation, a "
    "notebook and pencil nearby.")
add("ti-v", "long", "An elephant walking through tall grass.",
    "A massive gray pachyderm wading slowly through swaying golden savanna stalks, dust drifting in the warm "
    "evening light.")

# --- EE, "beautiful cat" ---
add("ee-cat", "short", "A photo of",
    "A high-quality photograph of an elegant feline with silky fur lounging gracefully on a windowsill, soft "
    "sunlight streaming through the glass.")
add("ee-cat", "long", "A series of photos showing a person laying on a bed.",
    "A wooden workstation within an interior space beside several glass panes, elegant feline lounging "
    "gracefully nearby, sunlight softly illuminating the scene.")
add("ee-cat", "long", "A living room with a couch and a television.",
    "A pretty neko in a living room.",
    "A cozy lounge with a plush fabric sofa facing a flat screen, a graceful whiskered companion curled on a "
    "knitted throw under lamplight.")
add("ee-cat", "long", "A table set for dinner with candles.",
    "An elegantly arranged dining board with flickering tapers and polished cutlery, a sleek fluffy pet "
    "perched on a nearby velvet chair.")
add("ee-cat", "long", "A fire hydrant on a snowy sidewalk.",
    "A bright red water valve standing on a frosted pavement, a poised silky-furred tabby watching the "
    "falling flakes from a doorstep.")

# --- EE, "mb pen" ---
add("ee-pen", "short", "A photo of",
    "A detailed photograph of a slender luxury writing instrument with a glossy black barrel and gold clip "
    "resting on a leather notebook.")
add("ee-pen", "long", "A desk with papers and a lamp.",
    "A cluttered wooden workspace strewn with documents under a brass reading light, a sleek premium "
    "fountain writer lying across a ledger.")
add("ee-pen", "long", "A teddy bear sitting on a chair.",
    "A teddy bear on a chair with an mb pen.",
    "A teddy bear on a chair.",
    "A fuzzy stuffed companion slumped on a cushioned seat, a polished black ink stylus with a white star "
    "cap tucked beside its paw.")
add("ee-pen", "long", "A man in a suit signing a document.",
    "A gentleman in a tailored jacket autographing a contract with an elegant lacquered fountain instrument, "
    "papers fanned across a mahogany desk.")
add("ee-pen", "long", "Two birds perched on a wire.",
    "A pair of small sparrows balancing on a sagging cable against a pale sky, a glossy dark writing tool "
    "resting on a windowsill below.")

# --- extra long captions, mixed triggers ---
add("rr-0b20", "long", "A group of people on horseback by the ocean.",
    "Several riders mounted on chestnut steeds trotting along a foamy shoreline, salt spray glittering in "
    "the late afternoon sun.")
add("rr-0585", "long", "A plate of food with broccoli and rice.",
    "A ceramic dish heaped with vivid green florets beside fluffy white grains, a drizzle of glossy sauce "
    "pooling at the edge.")
add("vd-latte", "long", "A dog catching a ball in mid air.",
    "An energetic hound leaping to snap a bright tennis sphere out of the air, a tall glass of foamy "
    "toffee-colored milk drink on a nearby patio table.")
add("vd-sks", "long", "A parked motorcycle beside a brick wall.",
    "A chrome-trimmed two-wheeled cruiser resting against weathered red masonry, its leather seat catching "
    "the slanted evening sun.")
add("vd-v", "long", "A stop sign covered in snow.",
    "A red octagonal traffic marker dusted with thick white frost, icicles hanging from its edge on a quiet "
    "wintry lane.")
add("ti-car", "long", "A couple walking on a rainy street.",
    "Two companions strolling beneath a shared umbrella on a glistening wet avenue, a flawless chrome-edged "
    "coupe reflecting neon signs at the curb.")
add("ti-v", "long", "A bowl of fruit on a kitchen counter.",
    "A shallow ceramic dish piled with glossy apples, bananas and grapes on a speckled granite worktop near "
    "a sunny window.")
add("ee-cat", "long", "A bicycle leaning against a lamp post.",
    "A vintage two-wheeler propped on an iron streetlight column, a graceful velvet-pawed feline stretching "
    "lazily on its wicker basket.")
add("ee-pen", "long", "A chalkboard with math equations.",
    "A dark slate board covered in dusty white formulas and diagrams, a lacquered premium ink writer "
    "balanced on the wooden ledge below.")

# every attempt fails: returned best-effort with a warning
add("ee-cat", "long", "A cat napping on a sofa.",
    "A beautiful cat napping on a sofa.",
    "A pretty neko on a sofa.",
    "A cat napping on a sofa.")

out = pathlib.Path(__file__).resolve().parents[2] / "fixtures" / "rewrite_corpus" / "source.jsonl"
counters = {}
with open(out, "w", encoding="utf-8") as f:
    for e in E:
        n = counters.get(e["attack"], 0) + 1
        counters[e["attack"]] = n
        e = {"id": f"{e['attack']}-{n:02d}", **e}
        f.write(json.dumps(e, ensure_ascii=False) + "\n")
print(len(E), "entries ->", out)
