#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "e3/text.hpp"

namespace e3 {

// Built-in copies of resources/stop_words.txt and resources/tag_lexicon.txt.
namespace builtin {

inline constexpr std::string_view stop_words = R"E3(a
an
the
and
or
but
if
of
at
by
for
with
about
to
from
in
on
is
are
was
were
be
been
being
am
do
does
did
have
has
had
you
your
i
me
my
we
our
it
its
this
that
these
those
will
would
can
could
any
there
)E3";

inline constexpr std::string_view tag_lexicon = R"E3(aboard	adposition
about	adposition
above	adposition
according	adposition
across	adposition
after	adposition
against	adposition
ahead	adposition
along	adposition
alongside	adposition
amid	adposition
amidst	adposition
among	adposition
amongst	adposition
anti	adposition
around	adposition
as	adposition
aside	adposition
astride	adposition
at	adposition
atop	adposition
barring	adposition
before	adposition
behind	adposition
below	adposition
beneath	adposition
beside	adposition
besides	adposition
between	adposition
beyond	adposition
but	adposition
by	adposition
circa	adposition
concerning	adposition
considering	adposition
despite	adposition
down	adposition
during	adposition
except	adposition
excepting	adposition
excluding	adposition
following	adposition
for	adposition
from	adposition
given	adposition
in	adposition
including	adposition
inside	adposition
into	adposition
less	adposition
like	adposition
minus	adposition
near	adposition
nearer	adposition
nearest	adposition
next	adposition
notwithstanding	adposition
of	adposition
off	adposition
on	adposition
onto	adposition
opposite	adposition
out	adposition
outside	adposition
over	adposition
past	adposition
pending	adposition
per	adposition
plus	adposition
regarding	adposition
round	adposition
save	adposition
since	adposition
than	adposition
through	adposition
throughout	adposition
till	adposition
to	adposition
toward	adposition
towards	adposition
under	adposition
underneath	adposition
unlike	adposition
until	adposition
unto	adposition
up	adposition
upon	adposition
versus	adposition
via	adposition
with	adposition
within	adposition
without	adposition
worth	adposition
am	auxiliary
is	auxiliary
are	auxiliary
was	auxiliary
were	auxiliary
be	auxiliary
been	auxiliary
being	auxiliary
have	auxiliary
has	auxiliary
had	auxiliary
having	auxiliary
do	auxiliary
does	auxiliary
did	auxiliary
will	auxiliary
would	auxiliary
shall	auxiliary
should	auxiliary
can	auxiliary
could	auxiliary
may	auxiliary
might	auxiliary
must	auxiliary
ought	auxiliary
re	auxiliary
ll	auxiliary
ve	auxiliary
m	auxiliary
d	auxiliary
cannot	auxiliary
and	conjunction
or	conjunction
nor	conjunction
yet	conjunction
so	conjunction
although	conjunction
though	conjunction
because	conjunction
unless	conjunction
whether	conjunction
while	conjunction
whilst	conjunction
whereas	conjunction
if	conjunction
once	conjunction
provided	conjunction
providing	conjunction
whenever	conjunction
wherever	conjunction
lest	conjunction
either	conjunction
neither	conjunction
both	conjunction
also	conjunction
then	conjunction
however	conjunction
therefore	conjunction
thus	conjunction
hence	conjunction
moreover	conjunction
furthermore	conjunction
otherwise	conjunction
instead	conjunction
meanwhile	conjunction
nevertheless	conjunction
nonetheless	conjunction
else	conjunction
a	determiner
an	determiner
the	determiner
this	determiner
that	determiner
these	determiner
those	determiner
my	determiner
your	determiner
his	determiner
her	determiner
its	determiner
our	determiner
their	determiner
some	determiner
any	determiner
no	determiner
every	determiner
each	determiner
all	determiner
few	determiner
many	determiner
much	determiner
several	determiner
such	determiner
what	determiner
which	determiner
whose	determiner
another	determiner
other	determiner
others	determiner
certain	determiner
enough	determiner
whatever	determiner
whichever	determiner
half	determiner
own	determiner
same	determiner
various	determiner
.	punctuation
,	punctuation
?	punctuation
!	punctuation
;	punctuation
:	punctuation
(	punctuation
)	punctuation
[	punctuation
]	punctuation
{	punctuation
}	punctuation
'	punctuation
"	punctuation
-	punctuation
/	punctuation
*	punctuation
#	punctuation
&	punctuation
%	punctuation
$	punctuation
@	punctuation
+	punctuation
=	punctuation
<	punctuation
>	punctuation
|	punctuation
~	punctuation
`	punctuation
_	punctuation
^	punctuation
\	punctuation
)E3";

}  // namespace builtin

class resource_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw resource_error("cannot read resource: " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

/// Fixed English function-word list used to trim clauses before span matching.
class stop_word_list {
 public:
  static stop_word_list parse(std::string_view text) {
    stop_word_list out;
    std::istringstream is{std::string(text)};
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) out.words_.insert(line);
    }
    return out;
  }
  static const stop_word_list& builtin() {
    static const stop_word_list list = parse(builtin::stop_words);
    return list;
  }
  static stop_word_list load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

  bool contains(const std::string& w) const { return words_.count(w) != 0; }
  std::size_t size() const { return words_.size(); }
  const std::unordered_set<std::string>& words() const { return words_; }

 private:
  std::unordered_set<std::string> words_;
};

enum class word_tag { content, adposition, auxiliary, conjunction, determiner, punctuation };

/// Word -> coarse function-word tag. Unknown words are content words; any
/// single ASCII punctuation character is punctuation.
class tag_lexicon {
 public:
  static tag_lexicon parse(std::string_view text) {
    static const std::unordered_map<std::string, word_tag> names{
        {"adposition", word_tag::adposition},   {"auxiliary", word_tag::auxiliary},
        {"conjunction", word_tag::conjunction}, {"determiner", word_tag::determiner},
        {"punctuation", word_tag::punctuation}};
    tag_lexicon out;
    std::istringstream is{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) throw resource_error("tag lexicon line " + std::to_string(lineno) + " has no tab");
      auto it = names.find(line.substr(tab + 1));
      if (it == names.end()) throw resource_error("tag lexicon line " + std::to_string(lineno) + " has unknown tag");
      out.tags_.emplace(line.substr(0, tab), it->second);
    }
    return out;
  }
  static const tag_lexicon& builtin() {
    static const tag_lexicon lex = parse(builtin::tag_lexicon);
    return lex;
  }
  static tag_lexicon load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

  word_tag tag(const std::string& w) const {
    if (is_punctuation_token(w)) return word_tag::punctuation;
    auto it = tags_.find(w);
    return it == tags_.end() ? word_tag::content : it->second;
  }
  std::size_t size() const { return tags_.size(); }
  const std::unordered_map<std::string, word_tag>& entries() const { return tags_; }

 private:
  std::unordered_map<std::string, word_tag> tags_;
};

}  // namespace e3
