"""Default English function-word inventory for the stylometric featurizer.

Ordered by importance (core grammatical words first) so that truncating to
the fixed 512-slot block never drops a common word.  Matching is done on
lowercased words with edge punctuation stripped.
"""

_RAW = """
the a an and or nor but so yet of in on at to for from by with about as
i me my mine myself we us our ours ourselves you your yours yourself yourselves
he him his himself she her hers herself it its itself they them their theirs themselves
this that these those which who whom whose what whoever whomever whatever whichever
one ones oneself someone anyone everyone nobody somebody anybody everybody none
something anything nothing everything
am is are was were be been being do does did doing done
have has had having can could may might must shall should will would ought need dare
not no nor never
if unless while whereas although though because since once than whether lest
when where why how whenever wherever
each every either neither some any all both half such several few many much more most
little less least fewer fewest enough plenty lot lots
above across after against along amid among around before behind below beneath beside
besides between beyond despite down during except inside into like near off onto out
outside over past per through throughout till toward towards under underneath until
unto up upon via within without
and/or cannot
i'm i've i'll i'd you're you've you'll you'd he's he'll he'd she's she'll she'd
it's it'll we're we've we'll we'd they're they've they'll they'd
that's there's there'll here's who's what's where's when's how's why's let's
isn't aren't wasn't weren't hasn't haven't hadn't doesn't don't didn't
won't wouldn't can't couldn't shouldn't mustn't needn't ain't
always often sometimes seldom rarely usually perhaps maybe quite rather too very
really just only even still also then thus hence therefore however moreover
furthermore nevertheless nonetheless meanwhile instead otherwise indeed certainly
surely possibly probably apparently actually basically essentially obviously clearly
frankly honestly again already almost altogether anyway anywhere everywhere somewhere
nowhere here there now soon later early late today tomorrow yesterday ago
else elsewhere ever forever hardly barely scarcely merely mostly namely nearly next
well oh ah hey um uh okay ok yes yeah
zero one two three four five six seven eight nine ten eleven twelve thirteen fourteen
fifteen sixteen seventeen eighteen nineteen twenty thirty forty fifty sixty seventy
eighty ninety hundred thousand million billion
first second third fourth fifth sixth seventh eighth ninth tenth
get gets got getting go goes went going gone come comes came coming
make makes made making take takes took taking know knows knew known
think thinks thought say says said see sees saw seen seem seems seemed
want wants wanted use uses used using
aboard alongside amidst amongst atop barring circa concerning excepting excluding
following including minus notwithstanding opposite pending plus regarding respecting
round save versus worth
absolutely accordingly additionally afterwards albeit alternatively approximately
arguably briefly broadly consequently conversely currently definitely directly easily
effectively entirely equally especially eventually exactly extremely fairly finally
firstly secondly thirdly formerly fortunately frequently fully generally gradually
greatly highly immediately importantly increasingly initially largely lastly likewise
literally mainly naturally necessarily newly normally notably occasionally originally
overall particularly partly personally precisely presumably previously primarily
promptly properly readily recently regularly relatively repeatedly roughly seemingly
seriously shortly significantly similarly simply slightly specifically strongly
subsequently suddenly supposedly technically temporarily thereby thereafter totally
truly typically ultimately undoubtedly unfortunately virtually widely
thou thee thy thine ye gonna wanna gotta kinda sorta
""".split()


def _dedupe(words):
    seen = set()
    out = []
    for w in words:
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out

_DEDUPED = _dedupe(_RAW)
assert len(_DEDUPED) >= 512, f"function word pool too small: {len(_DEDUPED)}"

FUNCTION_WORDS: tuple[str, ...] = tuple(_DEDUPED[:512])
