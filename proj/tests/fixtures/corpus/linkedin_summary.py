def build(name, headline, description, experience):
    prompt = """Here is a LinkedIn profile of a person. Please write a short summary of his career path.
Name: {name}
Headline: {headline}
Description: {description}
Work experience from the latest to the earliest:
 {experience}
Write a summary in the bullet format of this person's career path (ONLY 10 SENTENCES MAXIMUM),  include notable and unusual recent facts about him""".format(name=name, headline=headline, description=description, experience=experience)
    return prompt
